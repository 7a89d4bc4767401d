//! Cross-CSP access: user registration at home CSPs, redirect and
//! authentication, token issuance on chain, the foreign CSP's grant
//! decision, feedback, and CSP-to-CSP resource sharing.
//!
//! Each step runs as a simulator event on the node that owns it.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Behavior;
use crate::crypto::{self, derive_child_key, Address, Digest};
use crate::fixed::Fixed;
use crate::ledger::{
    build_feedback_tx, build_register_tx, build_token_tx, AccessToken, FeedbackPayload, FeedbackRole, TxRefs,
};
use crate::sim::{Event, World};
use crate::trust::{CredLabel, FeedbackLabel, SatLabel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserAccount {
    pub name: String,
    pub pseudonym: Address,
    /// Home CSP indices, in registration order.
    pub homes: Vec<usize>,
    pub profile: Vec<u8>,
    /// How this user behaves abroad; honest foreign CSPs rate accordingly.
    pub conduct: CredLabel,
    /// Credential per home CSP.
    pub credentials: BTreeMap<usize, Digest>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DenyReason {
    UnknownUser,
    UnknownCsp,
    AuthFailed,
    TokenTimeout,
    Expired,
    Audience,
    Resource,
    Privilege,
    TokenReused,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestState {
    Requested,
    Redirected,
    TokenIssued,
    TokenOnChain,
    Granted,
    Denied(DenyReason),
}

impl RequestState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RequestState::Granted | RequestState::Denied(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            RequestState::Requested => "REQUESTED",
            RequestState::Redirected => "REDIRECTED",
            RequestState::TokenIssued => "TOKEN_ISSUED",
            RequestState::TokenOnChain => "TOKEN_ON_CHAIN",
            RequestState::Granted => "GRANTED",
            RequestState::Denied(_) => "DENIED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessRequest {
    pub id: String,
    /// `None` for CSP-to-CSP sharing, where the borrower is its own user.
    pub user: Option<String>,
    pub pseudonym: Address,
    pub home: usize,
    pub foreign: usize,
    pub resource: String,
    /// Resource asked for when the token is presented.
    pub present_resource: String,
    pub privileges: Vec<String>,
    pub issued_at: u64,
    pub state: RequestState,
    pub token: Option<AccessToken>,
    pub txid: Option<Digest>,
    pub deadline: u64,
    pub bad_credential: bool,
    pub iaas: bool,
    pub local: bool,
}

#[derive(Clone, Debug)]
pub enum ProtocolEvent {
    /// The redirected user reaches its home CSP.
    AuthAtHome { request: usize },
    /// The user hands the token to the foreign CSP.
    PresentToken { request: usize },
    /// The user tells its home CSP how the service went.
    HomeFeedback { request: usize },
}

#[derive(Clone, Debug, Default)]
pub struct Federation {
    pub users: BTreeMap<String, UserAccount>,
    pub requests: Vec<AccessRequest>,
    by_id: BTreeMap<String, usize>,
}

impl Federation {
    pub fn request(&self, id: &str) -> Option<&AccessRequest> {
        self.by_id.get(id).map(|i| &self.requests[*i])
    }

    pub fn granted_count(&self) -> usize {
        self.requests
            .iter()
            .filter(|r| r.state == RequestState::Granted)
            .count()
    }
}

fn credential_for(home: &Address, pseudonym: &Address, profile: &[u8]) -> Digest {
    crypto::hash_parts(&[b"fedtrust-credential", &home.0, &pseudonym.0, profile])
}

/// Rating a foreign CSP gives a user with the given conduct.
pub fn foreign_rating(behavior: Behavior, conduct: CredLabel) -> FeedbackLabel {
    FeedbackLabel::Cred(match behavior {
        Behavior::Smearer => CredLabel::VeryBad,
        Behavior::Flatterer => CredLabel::Excellent,
        _ => conduct,
    })
}

/// Rating a home CSP submits for a foreign CSP with the given service.
pub fn home_rating(behavior: Behavior, service: SatLabel) -> FeedbackLabel {
    FeedbackLabel::Sat(match behavior {
        Behavior::Smearer => SatLabel::FullyDissatisfied,
        Behavior::Flatterer => SatLabel::FullySatisfied,
        _ => service,
    })
}

impl World {
    fn log_request(&mut self, r: usize, node: usize, extra: serde_json::Value) {
        let req = &self.fed.requests[r];
        let mut fields = json!({
            "request": req.id,
            "state": req.state.label(),
            "home": req.home,
            "foreign": req.foreign,
            "resource": req.resource,
        });
        if let RequestState::Denied(reason) = req.state {
            fields["reason"] = json!(reason);
        }
        if let Some(u) = &req.user {
            fields["user"] = json!(u);
        }
        if req.iaas {
            fields["iaas"] = json!(true);
        }
        if let serde_json::Value::Object(m) = extra {
            for (k, v) in m {
                fields[k] = v;
            }
        }
        self.log.record(self.now(), Some(node), "request", fields);
    }

    fn set_state(&mut self, r: usize, node: usize, state: RequestState, extra: serde_json::Value) {
        self.fed.requests[r].state = state;
        self.log_request(r, node, extra);
    }

    /// Creates (or links) a user account at `home`. The pseudonym is the
    /// address of a child key of the first home CSP's key.
    pub fn register_user(&mut self, home: usize, name: &str, conduct: CredLabel, profile: Vec<u8>) -> UserAccount {
        let now = self.now();
        let existing = self.fed.users.get(name).cloned();
        let (pseudonym, linked) = match &existing {
            Some(u) => (u.pseudonym, true),
            None => {
                let idx = self.nodes[home].next_user_index;
                (derive_child_key(&self.nodes[home].keys, idx).address(), false)
            }
        };
        let node = &mut self.nodes[home];
        let index = node.next_user_index;
        node.next_user_index += 1;
        let credential = credential_for(&node.address, &pseudonym, &profile);
        node.users.insert(
            pseudonym,
            crate::sim::node::LocalUser {
                name: name.to_string(),
                credential,
                index,
            },
        );
        let account = self.fed.users.entry(name.to_string()).or_insert_with(|| UserAccount {
            name: name.to_string(),
            pseudonym,
            homes: Vec::new(),
            profile: profile.clone(),
            conduct,
            credentials: BTreeMap::new(),
        });
        if !account.homes.contains(&home) {
            account.homes.push(home);
        }
        account.credentials.insert(home, credential);
        let account = account.clone();
        self.log.record(
            now,
            Some(home),
            "user_registered",
            json!({"user": name, "pseudonym": pseudonym, "linked": linked}),
        );
        account
    }

    /// Broadcasts a REGISTER transaction for node `i`.
    pub fn register_csp(&mut self, i: usize, weight_sat: Option<f64>, weight_auth: Option<f64>) {
        let nc = &self.cfg.nodes[i];
        let ws = Fixed::from_f64(weight_sat.unwrap_or(nc.weight_sat));
        let wa = Fixed::from_f64(weight_auth.unwrap_or(nc.weight_auth));
        let stake = self.cfg.stake_shares()[i];
        let prev = self.nodes[i].last_tx;
        let tx = build_register_tx(&self.nodes[i].keys, ws, wa, stake, prev);
        self.log
            .record(self.now(), Some(i), "csp_register", json!({"txid": tx.txid}));
        let _ = self.submit_tx(i, tx);
    }

    fn new_request(&mut self, id: Option<String>, req: AccessRequest) -> usize {
        let idx = self.fed.requests.len();
        let id = id.unwrap_or_else(|| format!("req{idx}"));
        let id = if self.fed.by_id.contains_key(&id) {
            format!("{id}#{idx}")
        } else {
            id
        };
        self.fed.by_id.insert(id.clone(), idx);
        self.fed.requests.push(AccessRequest { id, ..req });
        idx
    }

    /// A user asks foreign CSP `target` for `resource`.
    #[allow(clippy::too_many_arguments)]
    pub fn request_access(
        &mut self,
        id: Option<String>,
        user: &str,
        target: usize,
        resource: &str,
        privileges: Vec<String>,
        via: Option<usize>,
        bad_credential: bool,
        present_resource: Option<String>,
    ) -> usize {
        let now = self.now();
        let account = self.fed.users.get(user).cloned();
        let home = account
            .as_ref()
            .and_then(|a| via.filter(|v| a.homes.contains(v)).or_else(|| a.homes.first().copied()))
            .unwrap_or(target);
        let r = self.new_request(
            id,
            AccessRequest {
                id: String::new(),
                user: Some(user.to_string()),
                pseudonym: account.as_ref().map_or(Address([0; 20]), |a| a.pseudonym),
                home,
                foreign: target,
                resource: resource.to_string(),
                present_resource: present_resource.unwrap_or_else(|| resource.to_string()),
                privileges,
                issued_at: now,
                state: RequestState::Requested,
                token: None,
                txid: None,
                deadline: 0,
                bad_credential,
                iaas: false,
                local: false,
            },
        );
        self.log_request(r, target, json!({}));
        let Some(account) = account else {
            self.set_state(r, target, RequestState::Denied(DenyReason::UnknownUser), json!({}));
            return r;
        };
        if account.homes.contains(&target) {
            self.fed.requests[r].local = true;
            self.set_state(r, target, RequestState::Granted, json!({"local": true}));
            return r;
        }
        if !self.nodes[target].is_registered() {
            self.set_state(r, target, RequestState::Denied(DenyReason::UnknownCsp), json!({}));
            return r;
        }
        self.set_state(r, target, RequestState::Redirected, json!({}));
        let at = now + self.cfg.network.user_latency_ms;
        self.queue
            .schedule(at, Event::Protocol(ProtocolEvent::AuthAtHome { request: r }))
            .expect("future");
        r
    }

    /// CSP `borrower` obtains `resource` from `lender`, acting as its own
    /// home CSP and user.
    pub fn iaas_share_resource(
        &mut self,
        id: Option<String>,
        borrower: usize,
        lender: usize,
        resource: &str,
        privileges: Vec<String>,
    ) -> usize {
        let now = self.now();
        let r = self.new_request(
            id,
            AccessRequest {
                id: String::new(),
                user: None,
                pseudonym: self.nodes[borrower].address,
                home: borrower,
                foreign: lender,
                resource: resource.to_string(),
                present_resource: resource.to_string(),
                privileges,
                issued_at: now,
                state: RequestState::Requested,
                token: None,
                txid: None,
                deadline: 0,
                bad_credential: false,
                iaas: true,
                local: false,
            },
        );
        self.log_request(r, lender, json!({}));
        if !self.nodes[lender].is_registered() || !self.nodes[borrower].is_registered() {
            self.set_state(r, lender, RequestState::Denied(DenyReason::UnknownCsp), json!({}));
            return r;
        }
        self.set_state(r, lender, RequestState::Redirected, json!({}));
        self.authenticate_and_issue(r);
        r
    }

    pub(crate) fn on_protocol(&mut self, ev: ProtocolEvent) {
        match ev {
            ProtocolEvent::AuthAtHome { request } => self.authenticate_and_issue(request),
            ProtocolEvent::PresentToken { request } => {
                let req = &self.fed.requests[request];
                if req.state.is_terminal() {
                    return;
                }
                let foreign = req.foreign;
                let deadline =
                    self.now() + self.cfg.protocol.confirm_timeout_intervals * self.params.consensus.block_interval_ms;
                self.fed.requests[request].deadline = deadline;
                self.nodes[foreign].pending.push(request);
                self.check_pending(foreign);
            }
            ProtocolEvent::HomeFeedback { request } => {
                let req = &self.fed.requests[request];
                let label = home_rating(self.nodes[req.home].behavior, self.cfg.nodes[req.foreign].service);
                self.submit_feedback(request, FeedbackRole::Home, label);
            }
        }
    }

    /// Home CSP checks the user's credential, issues the token and records
    /// it on chain.
    pub fn authenticate_and_issue(&mut self, r: usize) {
        let now = self.now();
        let req = self.fed.requests[r].clone();
        let home = req.home;
        if !req.iaas {
            let presented = self
                .fed
                .users
                .get(req.user.as_deref().unwrap_or_default())
                .and_then(|u| u.credentials.get(&home).copied());
            let held = self.nodes[home].users.get(&req.pseudonym).map(|u| u.credential);
            let ok = !req.bad_credential && presented.is_some() && presented == held;
            if !ok {
                self.set_state(r, home, RequestState::Denied(DenyReason::AuthFailed), json!({}));
                return;
            }
        }
        let policy = &self.cfg.nodes[home].privileges;
        let privileges: Vec<String> = req.privileges.iter().filter(|p| policy.contains(p)).cloned().collect();
        let ttl = self.cfg.protocol.token_ttl_intervals * self.params.consensus.block_interval_ms;
        let nonce = self.nodes[home].next_nonce;
        self.nodes[home].next_nonce += 1;
        let token = AccessToken::new(
            req.pseudonym,
            self.nodes[home].address,
            self.nodes[req.foreign].address,
            Address::of_resource(&req.resource),
            privileges,
            now,
            now + ttl,
            nonce,
        );
        let profile = match &req.user {
            Some(u) => self.fed.users[u].profile.clone(),
            None => self.nodes[home].name.clone().into_bytes(),
        };
        let foreign_pub = self.nodes[req.foreign].keys.public_key();
        let refs = TxRefs {
            prev_tx: self.nodes[home].last_tx,
            ref_in: crypto::hash(&profile),
            ref_out: token.token_id,
        };
        let resource_addr = token.resource;
        let tx = build_token_tx(
            &self.nodes[home].keys,
            &profile,
            resource_addr,
            &foreign_pub,
            token.clone(),
            refs,
            &mut self.crypto_rng,
        )
        .expect("token built from consistent claims");
        let txid = match self.submit_tx(home, tx) {
            Ok(txid) => txid,
            Err(_) => {
                // the home CSP refused its own token (e.g. not registered)
                self.set_state(r, home, RequestState::Denied(DenyReason::AuthFailed), json!({}));
                return;
            }
        };
        self.fed.requests[r].token = Some(token.clone());
        self.fed.requests[r].txid = Some(txid);
        self.set_state(
            r,
            home,
            RequestState::TokenIssued,
            json!({"token_id": token.token_id, "txid": txid}),
        );
        let at = now + self.cfg.network.user_latency_ms;
        self.queue
            .schedule(at, Event::Protocol(ProtocolEvent::PresentToken { request: r }))
            .expect("future");

        if self.nodes[home].behavior == Behavior::DoubleIssuer {
            let dup = build_token_tx(
                &self.nodes[home].keys,
                &profile,
                resource_addr,
                &foreign_pub,
                token.clone(),
                refs,
                &mut self.crypto_rng,
            )
            .expect("same claims");
            let dup_txid = self.force_tx(home, dup);
            let mut copy = self.fed.requests[r].clone();
            copy.txid = Some(dup_txid);
            let id = format!("{}-dup", copy.id);
            let d = self.new_request(Some(id), copy);
            self.log_request(
                d,
                home,
                json!({"token_id": token.token_id, "txid": dup_txid, "duplicate": true}),
            );
            self.queue
                .schedule(at, Event::Protocol(ProtocolEvent::PresentToken { request: d }))
                .expect("future");
        }
    }

    /// Foreign CSP `i` re-examines the requests waiting on its chain.
    pub(crate) fn check_pending(&mut self, i: usize) {
        if self.nodes[i].pending.is_empty() {
            return;
        }
        let pending = std::mem::take(&mut self.nodes[i].pending);
        let mut still = Vec::new();
        for r in pending {
            if !self.grant_access(r) {
                still.push(r);
            }
        }
        still.extend(std::mem::take(&mut self.nodes[i].pending));
        self.nodes[i].pending = still;
    }

    /// Decides request `r` at its foreign CSP if possible; returns whether
    /// it reached a terminal state.
    pub fn grant_access(&mut self, r: usize) -> bool {
        let now = self.now();
        let req = self.fed.requests[r].clone();
        if req.state.is_terminal() {
            return true;
        }
        let f = req.foreign;
        let token = req.token.clone().expect("token issued before presentation");
        let snap = self.nodes[f].tip().clone();
        let Some(rec) = snap.ledger.token(&token.token_id) else {
            if now >= req.deadline {
                self.set_state(r, f, RequestState::Denied(DenyReason::TokenTimeout), json!({}));
                return true;
            }
            return false;
        };
        if req.state != RequestState::TokenOnChain {
            self.set_state(
                r,
                f,
                RequestState::TokenOnChain,
                json!({"height": rec.height, "txid": rec.txid}),
            );
        }
        let chain_token = &rec.token;
        let node = &self.nodes[f];
        let serves = self.cfg.nodes[f]
            .resources
            .as_ref()
            .is_none_or(|rs| rs.contains(&req.present_resource));
        let verdict = if node.consumed_tokens.contains(&chain_token.token_id) {
            Err(DenyReason::TokenReused)
        } else if chain_token.audience != node.address {
            Err(DenyReason::Audience)
        } else if chain_token.resource != Address::of_resource(&req.present_resource) || !serves {
            Err(DenyReason::Resource)
        } else if !req.privileges.iter().all(|p| chain_token.privileges.contains(p)) {
            Err(DenyReason::Privilege)
        } else if !chain_token.is_live_at(now) {
            Err(DenyReason::Expired)
        } else {
            Ok(())
        };
        match verdict {
            Err(reason) => self.set_state(r, f, RequestState::Denied(reason), json!({})),
            Ok(()) => {
                self.nodes[f].consumed_tokens.insert(chain_token.token_id);
                let height = rec.height;
                let txid = rec.txid;
                self.set_state(
                    r,
                    f,
                    RequestState::Granted,
                    json!({"token_id": token.token_id, "height": height, "txid": txid}),
                );
                if self.cfg.protocol.auto_feedback {
                    let conduct = match &req.user {
                        Some(u) => self.fed.users[u].conduct,
                        None => CredLabel::Good,
                    };
                    let label = foreign_rating(self.nodes[f].behavior, conduct);
                    self.submit_feedback(r, FeedbackRole::Foreign, label);
                    let at = now + self.cfg.network.user_latency_ms;
                    self.queue
                        .schedule(at, Event::Protocol(ProtocolEvent::HomeFeedback { request: r }))
                        .expect("future");
                }
            }
        }
        true
    }

    /// Explicit rating of a request by name.
    pub fn submit_feedback_for(&mut self, request: &str, role: FeedbackRole, label: FeedbackLabel) {
        match self.fed.by_id.get(request).copied() {
            Some(r) => self.submit_feedback(r, role, label),
            None => self.log.record(
                self.now(),
                None,
                "feedback_skipped",
                json!({"request": request, "why": "unknown request"}),
            ),
        }
    }

    /// The foreign CSP rates the user, or the home CSP rates the foreign
    /// CSP on the user's behalf.
    pub fn submit_feedback(&mut self, r: usize, role: FeedbackRole, label: FeedbackLabel) {
        let req = self.fed.requests[r].clone();
        let Some(token) = req.token else {
            self.log.record(
                self.now(),
                None,
                "feedback_skipped",
                json!({"request": req.id, "why": "no token"}),
            );
            return;
        };
        let (rater, subject) = match role {
            FeedbackRole::Foreign => (req.foreign, req.home),
            FeedbackRole::Home => (req.home, req.foreign),
        };
        let payload = FeedbackPayload {
            rater: self.nodes[rater].address,
            subject: self.nodes[subject].address,
            user: req.pseudonym,
            label: label.code(),
            role,
            token_id: token.token_id,
        };
        let tx = build_feedback_tx(&self.nodes[rater].keys, payload, self.nodes[rater].last_tx);
        let txid = tx.txid;
        self.log.record(
            self.now(),
            Some(rater),
            "feedback",
            json!({"request": req.id, "role": role, "label": label.to_string(), "txid": txid}),
        );
        let _ = self.submit_tx(rater, tx);
    }

    /// One random request between registered parties.
    pub(crate) fn traffic_step(&mut self, iaas_fraction: f64) {
        let registered: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_registered())
            .collect();
        if registered.len() < 2 {
            return;
        }
        let iaas = self.traffic_rng.gen_bool(iaas_fraction);
        let users: Vec<String> = self.fed.users.keys().cloned().collect();
        if iaas || users.is_empty() {
            let pick: Vec<usize> = registered.choose_multiple(&mut self.traffic_rng, 2).copied().collect();
            let resource = self.pick_resource(pick[1]);
            self.iaas_share_resource(None, pick[0], pick[1], &resource, vec!["read".into()]);
            return;
        }
        let user = users.choose(&mut self.traffic_rng).expect("non-empty").clone();
        let homes = self.fed.users[&user].homes.clone();
        let targets: Vec<usize> = registered.into_iter().filter(|t| !homes.contains(t)).collect();
        let Some(&target) = targets.choose(&mut self.traffic_rng) else {
            return;
        };
        let resource = self.pick_resource(target);
        self.request_access(None, &user, target, &resource, vec!["read".into()], None, false, None);
    }

    fn pick_resource(&mut self, csp: usize) -> String {
        match &self.cfg.nodes[csp].resources {
            Some(rs) if !rs.is_empty() => rs.choose(&mut self.traffic_rng).expect("non-empty").clone(),
            _ => format!("vm-{}", self.traffic_rng.gen_range(0..4)),
        }
    }
}
