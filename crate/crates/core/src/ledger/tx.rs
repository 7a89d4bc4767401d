use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Reader, Writer};
use super::{LedgerError, Reason};
use crate::crypto::{self, Address, Ciphertext, Digest, KeyPair, PublicKey, Signature};
use crate::fixed::Fixed;
use crate::trust::FeedbackLabel;

/// Claims binding a user, the issuing home CSP, the recipient foreign CSP
/// and a resource.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    pub token_id: Digest,
    pub user_pseudonym: Address,
    pub issuer: Address,
    pub audience: Address,
    pub resource: Address,
    pub privileges: Vec<String>,
    pub issued_at: u64,
    pub expires_at: u64,
    pub nonce: u64,
}

impl AccessToken {
    /// Builds a token and fills in its id.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        user_pseudonym: Address,
        issuer: Address,
        audience: Address,
        resource: Address,
        privileges: Vec<String>,
        issued_at: u64,
        expires_at: u64,
        nonce: u64,
    ) -> Self {
        let mut t = AccessToken {
            token_id: Digest::ZERO,
            user_pseudonym,
            issuer,
            audience,
            resource,
            privileges,
            issued_at,
            expires_at,
            nonce,
        };
        t.token_id = t.compute_id();
        t
    }

    fn encode_claims(&self, w: &mut Writer) {
        w.address(&self.user_pseudonym)
            .address(&self.issuer)
            .address(&self.audience)
            .address(&self.resource)
            .u16(self.privileges.len() as u16);
        for p in &self.privileges {
            w.u8(p.len() as u8).raw(p.as_bytes());
        }
        w.u64(self.issued_at).u64(self.expires_at).u64(self.nonce);
    }

    pub fn compute_id(&self) -> Digest {
        let mut w = Writer::new();
        self.encode_claims(&mut w);
        crypto::hash(&w.into_bytes())
    }

    pub fn is_well_formed(&self) -> bool {
        self.expires_at > self.issued_at
            && self.token_id == self.compute_id()
            && self
                .privileges
                .iter()
                .all(|p| p.len() <= u8::MAX as usize && p.is_ascii())
    }

    pub fn is_live_at(&self, now: u64) -> bool {
        now < self.expires_at
    }

    fn encode(&self, w: &mut Writer) {
        w.digest(&self.token_id);
        self.encode_claims(w);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let token_id = r.digest()?;
        let user_pseudonym = r.address()?;
        let issuer = r.address()?;
        let audience = r.address()?;
        let resource = r.address()?;
        let n = r.u16()?;
        let mut privileges = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let len = r.u8()? as usize;
            let raw = r.take(len)?;
            if !raw.is_ascii() {
                return Err(DecodeError::NotAscii);
            }
            privileges.push(String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::NotAscii)?);
        }
        Ok(AccessToken {
            token_id,
            user_pseudonym,
            issuer,
            audience,
            resource,
            privileges,
            issued_at: r.u64()?,
            expires_at: r.u64()?,
            nonce: r.u64()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxInput {
    pub idx: u32,
    pub ref_in: Digest,
    pub enc_user: Ciphertext,
    pub resource: Address,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxOutput {
    pub idx: u32,
    pub ref_out: Digest,
    pub token: AccessToken,
    pub recipient: Address,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Token,
    Feedback,
    Register,
}

impl TxKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Token => "token",
            TxKind::Feedback => "feedback",
            TxKind::Register => "register",
        }
    }

    fn code(self) -> u8 {
        match self {
            TxKind::Token => 0,
            TxKind::Feedback => 1,
            TxKind::Register => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self, DecodeError> {
        match c {
            0 => Ok(TxKind::Token),
            1 => Ok(TxKind::Feedback),
            2 => Ok(TxKind::Register),
            tag => Err(DecodeError::BadTag {
                what: "transaction kind",
                tag,
            }),
        }
    }
}

/// Which side of a completed access is giving the rating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackRole {
    /// The home CSP, on behalf of its user, rates the foreign CSP's service.
    Home,
    /// The foreign CSP rates the visiting user's conduct.
    Foreign,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackPayload {
    pub rater: Address,
    pub subject: Address,
    pub user: Address,
    pub label: u8,
    pub role: FeedbackRole,
    pub token_id: Digest,
}

impl FeedbackPayload {
    pub fn label(&self) -> Option<FeedbackLabel> {
        FeedbackLabel::from_code(self.role, self.label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterPayload {
    pub public_key: PublicKey,
    /// Declared satisfaction weight (omega_1i).
    pub weight_sat: Fixed,
    /// Declared authentication weight (omega_2i).
    pub weight_auth: Fixed,
    pub stake: Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Token,
    Feedback(FeedbackPayload),
    Register(RegisterPayload),
}

impl Payload {
    fn kind(&self) -> TxKind {
        match self {
            Payload::Token => TxKind::Token,
            Payload::Feedback(_) => TxKind::Feedback,
            Payload::Register(_) => TxKind::Register,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Payload::Token => {}
            Payload::Feedback(f) => {
                let role = match f.role {
                    FeedbackRole::Home => 0,
                    FeedbackRole::Foreign => 1,
                };
                w.address(&f.rater)
                    .address(&f.subject)
                    .address(&f.user)
                    .u8(f.label)
                    .u8(role)
                    .digest(&f.token_id);
            }
            Payload::Register(r) => {
                w.public_key(&r.public_key)
                    .u64(r.weight_sat.raw())
                    .u64(r.weight_auth.raw())
                    .u64(r.stake.raw());
            }
        }
        w.into_bytes()
    }

    fn from_bytes(kind: TxKind, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = match kind {
            TxKind::Token => Payload::Token,
            TxKind::Feedback => {
                let rater = r.address()?;
                let subject = r.address()?;
                let user = r.address()?;
                let label = r.u8()?;
                let role = match r.u8()? {
                    0 => FeedbackRole::Home,
                    1 => FeedbackRole::Foreign,
                    tag => {
                        return Err(DecodeError::BadTag {
                            what: "feedback role",
                            tag,
                        })
                    }
                };
                Payload::Feedback(FeedbackPayload {
                    rater,
                    subject,
                    user,
                    label,
                    role,
                    token_id: r.digest()?,
                })
            }
            TxKind::Register => Payload::Register(RegisterPayload {
                public_key: r.public_key()?,
                weight_sat: Fixed::from_raw(r.u64()?),
                weight_auth: Fixed::from_raw(r.u64()?),
                stake: Fixed::from_raw(r.u64()?),
            }),
        };
        r.finish()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub txid: Digest,
    pub kind: TxKind,
    pub n_in: u16,
    pub inputs: Vec<TxInput>,
    pub n_out: u16,
    pub outputs: Vec<TxOutput>,
    /// Link to the issuer's previous transaction, zero for its first.
    pub prev_tx: Digest,
    pub payload: Payload,
    pub issuer_pub: PublicKey,
    pub sig: Signature,
}

/// Deterministic encoding of every field except `txid` and `sig`.
pub fn canonical_serialize(tx: &Transaction) -> Vec<u8> {
    let mut w = Writer::new();
    tx.encode_body(&mut w);
    w.into_bytes()
}

impl Transaction {
    fn encode_body(&self, w: &mut Writer) {
        w.u8(self.kind.code()).u16(self.n_in).u16(self.inputs.len() as u16);
        for i in &self.inputs {
            w.u32(i.idx)
                .digest(&i.ref_in)
                .ciphertext(&i.enc_user)
                .address(&i.resource);
        }
        w.u16(self.n_out).u16(self.outputs.len() as u16);
        for o in &self.outputs {
            w.u32(o.idx).digest(&o.ref_out);
            o.token.encode(w);
            w.address(&o.recipient);
        }
        w.digest(&self.prev_tx)
            .var(&self.payload.to_bytes())
            .public_key(&self.issuer_pub);
    }

    pub fn compute_txid(&self) -> Digest {
        crypto::hash(&canonical_serialize(self))
    }

    /// Unsigned transaction with counts filled in from the vectors.
    pub fn unsigned(
        payload: Payload,
        inputs: Vec<TxInput>,
        outputs: Vec<TxOutput>,
        prev_tx: Digest,
        issuer_pub: PublicKey,
    ) -> Self {
        Transaction {
            txid: Digest::ZERO,
            kind: payload.kind(),
            n_in: inputs.len() as u16,
            inputs,
            n_out: outputs.len() as u16,
            outputs,
            prev_tx,
            payload,
            issuer_pub,
            sig: Signature([0u8; 64]),
        }
    }

    /// Recomputes the txid and signs it with `key`.
    pub fn seal(mut self, key: &KeyPair) -> Self {
        self.issuer_pub = key.public_key();
        self.txid = self.compute_txid();
        self.sig = crypto::sign(key, &self.txid);
        self
    }

    pub fn issuer(&self) -> Address {
        self.issuer_pub.address()
    }

    pub fn token(&self) -> Option<&AccessToken> {
        match self.kind {
            TxKind::Token => self.outputs.first().map(|o| &o.token),
            _ => None,
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        self.encode_body(w);
        w.digest(&self.txid).signature(&self.sig);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let kind = TxKind::from_code(r.u8()?)?;
        let n_in = r.u16()?;
        let len_in = r.u16()?;
        let mut inputs = Vec::with_capacity(len_in as usize);
        for _ in 0..len_in {
            inputs.push(TxInput {
                idx: r.u32()?,
                ref_in: r.digest()?,
                enc_user: r.ciphertext()?,
                resource: r.address()?,
            });
        }
        let n_out = r.u16()?;
        let len_out = r.u16()?;
        let mut outputs = Vec::with_capacity(len_out as usize);
        for _ in 0..len_out {
            outputs.push(TxOutput {
                idx: r.u32()?,
                ref_out: r.digest()?,
                token: AccessToken::decode(r)?,
                recipient: r.address()?,
            });
        }
        let prev_tx = r.digest()?;
        let payload = Payload::from_bytes(kind, r.var()?)?;
        Ok(Transaction {
            kind,
            n_in,
            inputs,
            n_out,
            outputs,
            prev_tx,
            payload,
            issuer_pub: r.public_key()?,
            txid: r.digest()?,
            sig: r.signature()?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    /// Checks that depend on the transaction alone: shape, txid, signature.
    pub fn check_intrinsic(&self) -> Result<(), Reason> {
        if self.n_in as usize != self.inputs.len() || self.n_out as usize != self.outputs.len() {
            return Err(Reason::Structure);
        }
        if self.inputs.iter().enumerate().any(|(i, x)| x.idx as usize != i)
            || self.outputs.iter().enumerate().any(|(i, x)| x.idx as usize != i)
        {
            return Err(Reason::Structure);
        }
        if self.payload.kind() != self.kind {
            return Err(Reason::Structure);
        }
        match &self.payload {
            Payload::Token => {
                if self.outputs.len() != 1 {
                    return Err(Reason::Structure);
                }
                let out = &self.outputs[0];
                if out.token.audience != out.recipient {
                    return Err(Reason::AudienceMismatch);
                }
                if !out.token.is_well_formed() {
                    return Err(Reason::BadToken);
                }
            }
            Payload::Feedback(f) => {
                if !self.inputs.is_empty() || !self.outputs.is_empty() {
                    return Err(Reason::Structure);
                }
                if f.label().is_none() {
                    return Err(Reason::BadLabel);
                }
            }
            Payload::Register(_) => {
                if !self.inputs.is_empty() || !self.outputs.is_empty() {
                    return Err(Reason::Structure);
                }
            }
        }
        if self.txid != self.compute_txid() {
            return Err(Reason::BadTxid);
        }
        if !crypto::verify(&self.issuer_pub, &self.txid, &self.sig) {
            return Err(Reason::BadSignature);
        }
        Ok(())
    }
}

/// Prior-transaction references carried by a token transaction.
#[derive(Clone, Copy, Debug, Default)]
pub struct TxRefs {
    pub prev_tx: Digest,
    pub ref_in: Digest,
    pub ref_out: Digest,
}

/// One input carrying the user's encrypted profile and the resource, one
/// output carrying the token for the recipient CSP.
pub fn build_token_tx<R: RngCore + ?Sized>(
    issuer: &KeyPair,
    user_info: &[u8],
    resource: Address,
    recipient: &PublicKey,
    token: AccessToken,
    refs: TxRefs,
    rng: &mut R,
) -> Result<Transaction, LedgerError> {
    if token.issuer != issuer.address() {
        return Err(LedgerError::Build(Reason::IssuerMismatch));
    }
    if token.audience != recipient.address() {
        return Err(LedgerError::Build(Reason::AudienceMismatch));
    }
    if token.resource != resource {
        return Err(LedgerError::Build(Reason::Structure));
    }
    if !token.is_well_formed() {
        return Err(LedgerError::Build(Reason::BadToken));
    }
    let enc_user = crypto::encrypt_for(recipient, user_info, rng)?;
    let input = TxInput {
        idx: 0,
        ref_in: refs.ref_in,
        enc_user,
        resource,
    };
    let output = TxOutput {
        idx: 0,
        ref_out: refs.ref_out,
        recipient: token.audience,
        token,
    };
    Ok(Transaction::unsigned(
        Payload::Token,
        vec![input],
        vec![output],
        refs.prev_tx,
        issuer.public_key(),
    )
    .seal(issuer))
}

pub fn build_feedback_tx(rater: &KeyPair, feedback: FeedbackPayload, prev_tx: Digest) -> Transaction {
    Transaction::unsigned(Payload::Feedback(feedback), vec![], vec![], prev_tx, rater.public_key()).seal(rater)
}

pub fn build_register_tx(
    keys: &KeyPair,
    weight_sat: Fixed,
    weight_auth: Fixed,
    stake: Fixed,
    prev_tx: Digest,
) -> Transaction {
    let payload = Payload::Register(RegisterPayload {
        public_key: keys.public_key(),
        weight_sat,
        weight_auth,
        stake,
    });
    Transaction::unsigned(payload, vec![], vec![], prev_tx, keys.public_key()).seal(keys)
}
