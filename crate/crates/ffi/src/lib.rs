//! C interface to the simulator, the ledger verifier, the signature scheme
//! and the trust update rules.
//!
//! Fallible functions return an [`FtStatus`]; after a failure,
//! `ft_last_error_message` describes it on the calling thread. Handles and
//! strings returned through out-pointers belong to the caller and are
//! released with the matching `*_free` function. Trust values cross the
//! boundary as raw fixed-point integers scaled by [`FT_FIXED_SCALE`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fedtrust::config::ScenarioConfig;
use fedtrust::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use fedtrust::fixed::{Fixed, SCALE};
use fedtrust::report::{RunReport, TrustReport};
use fedtrust::sim::log::parse_jsonl;
use fedtrust::sim::World;
use fedtrust::trust::{cred_update, overall_trust, Weights};
use fedtrust::verify::{verify_bytes, verify_path, Verified, VerifyError};

/// Raw value of 1.0 in the fixed-point trust representation.
pub const FT_FIXED_SCALE: u64 = 1_000_000_000_000;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    InvalidLedger = 5,
    Range = 6,
    Panic = 99,
}

/// A simulated network built from a scenario.
pub struct FtSim {
    world: World,
}

/// A ledger that passed verification.
pub struct FtLedger {
    verified: Verified,
}

pub struct FtKeyPair {
    key: KeyPair,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (FtStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FtStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (FtStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (FtStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn array_arg<const N: usize>(p: *const u8, what: &str) -> Result<[u8; N], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut a = [0u8; N];
    a.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(a)
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn put_bytes(out: *mut u8, bytes: &[u8], what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| (FtStatus::Panic, e.to_string()))?;
    put(out, c.into_raw(), "out")
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn unit(raw: u64, what: &str) -> Result<Fixed, Failure> {
    if raw > SCALE {
        return Err((FtStatus::Range, format!("{what} = {raw} exceeds {SCALE}")));
    }
    Ok(Fixed::from_raw(raw))
}

fn verify_failure(e: VerifyError) -> Failure {
    match e.failure() {
        Some(f) => (FtStatus::InvalidLedger, f.to_string()),
        None => (FtStatus::Io, e.to_string()),
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- simulator ---------------------------------------------------------

/// Builds a network from a scenario given as TOML text.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_new(config_toml: *const c_char, out: *mut *mut FtSim) -> FtStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let cfg = ScenarioConfig::from_toml(text).map_err(|e| (FtStatus::Config, e.to_string()))?;
        let world = World::new(cfg).map_err(|e| (FtStatus::Config, e.to_string()))?;
        put(out, Box::into_raw(Box::new(FtSim { world })), "out")
    })
}

/// Runs the scenario to its configured end.
///
/// # Safety
/// `sim` must be a live handle from `ft_sim_new`.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_run(sim: *mut FtSim) -> FtStatus {
    guard(|| {
        handle_mut(sim, "sim")?.world.run();
        Ok(())
    })
}

/// Processes every event due at or before `end_ms`.
///
/// # Safety
/// `sim` must be a live handle from `ft_sim_new`.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_run_until(sim: *mut FtSim, end_ms: u64) -> FtStatus {
    guard(|| {
        handle_mut(sim, "sim")?.world.run_until(end_ms);
        Ok(())
    })
}

/// Simulated time in ms.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_now(sim: *const FtSim, out: *mut u64) -> FtStatus {
    guard(|| put(out, handle(sim, "sim")?.world.now(), "out"))
}

/// Height of the reference node's canonical chain.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_height(sim: *const FtSim, out: *mut u64) -> FtStatus {
    guard(|| {
        let w = &handle(sim, "sim")?.world;
        put(out, w.canonical_chain().len() as u64 - 1, "out")
    })
}

/// Writes the reference node's canonical chain as a ledger file.
///
/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_write_ledger(sim: *const FtSim, path: *const c_char) -> FtStatus {
    guard(|| {
        let w = &handle(sim, "sim")?.world;
        let path = str_arg(path, "path")?;
        w.ledger_file()
            .write(Path::new(path))
            .map_err(|e| (FtStatus::Io, format!("{path}: {e}")))
    })
}

/// The event log as JSON lines. Free with `ft_string_free`.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_events_jsonl(sim: *const FtSim, out: *mut *mut c_char) -> FtStatus {
    guard(|| put_string(out, handle(sim, "sim")?.world.log.to_jsonl()))
}

/// Run report as JSON. Free with `ft_string_free`.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_report_json(sim: *const FtSim, out: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let w = &handle(sim, "sim")?.world;
        let blocks = w.ledger_file().blocks;
        let events = parse_jsonl(&w.log.to_jsonl()).map_err(|e| (FtStatus::Panic, e.to_string()))?;
        let report = RunReport::build(&w.params, &blocks, &events);
        put_string(
            out,
            serde_json::to_string(&report).map_err(|e| (FtStatus::Panic, e.to_string()))?,
        )
    })
}

/// # Safety
/// `sim` must be null or a handle from `ft_sim_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_sim_free(sim: *mut FtSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

// ---- ledger ------------------------------------------------------------

/// Reads and fully verifies a ledger file. An invalid ledger yields
/// `FT_STATUS_INVALID_LEDGER` with the first failure as the message.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_open(path: *const c_char, out: *mut *mut FtLedger) -> FtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let verified = verify_path(Path::new(path)).map_err(verify_failure)?;
        put(out, Box::into_raw(Box::new(FtLedger { verified })), "out")
    })
}

/// As `ft_ledger_open`, from an in-memory ledger file.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_from_bytes(data: *const u8, len: usize, out: *mut *mut FtLedger) -> FtStatus {
    guard(|| {
        let bytes = bytes_arg(data, len, "data")?;
        let verified = verify_bytes(bytes).map_err(verify_failure)?;
        put(out, Box::into_raw(Box::new(FtLedger { verified })), "out")
    })
}

/// # Safety
/// `ledger` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_height(ledger: *const FtLedger, out: *mut u64) -> FtStatus {
    guard(|| put(out, handle(ledger, "ledger")?.verified.tip.height(), "out"))
}

/// Writes the 32-byte tip hash to `out`.
///
/// # Safety
/// `ledger` must be a live handle; `out` must have room for 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_tip_hash(ledger: *const FtLedger, out: *mut u8) -> FtStatus {
    guard(|| put_bytes(out, &handle(ledger, "ledger")?.verified.tip.hash().0, "out"))
}

/// Per-CSP and per-user trust replayed from the ledger, as JSON. Free
/// with `ft_string_free`.
///
/// # Safety
/// `ledger` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_trust_report_json(ledger: *const FtLedger, out: *mut *mut c_char) -> FtStatus {
    guard(|| {
        let v = &handle(ledger, "ledger")?.verified;
        let report = TrustReport::from_chain(&v.params, &v.blocks);
        put_string(
            out,
            serde_json::to_string(&report).map_err(|e| (FtStatus::Panic, e.to_string()))?,
        )
    })
}

/// # Safety
/// `ledger` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_ledger_free(ledger: *mut FtLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

// ---- crypto ------------------------------------------------------------

/// SHA-256 of `len` bytes into the 32-byte `out`.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ft_hash(data: *const u8, len: usize, out: *mut u8) -> FtStatus {
    guard(|| put_bytes(out, &crypto::hash(bytes_arg(data, len, "data")?).0, "out"))
}

/// Deterministic key pair from a 32-byte seed.
///
/// # Safety
/// `seed` must point to 32 readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_keypair_from_seed(seed: *const u8, out: *mut *mut FtKeyPair) -> FtStatus {
    guard(|| {
        let key = crypto::generate_keypair(&array_arg::<32>(seed, "seed")?);
        put(out, Box::into_raw(Box::new(FtKeyPair { key })), "out")
    })
}

/// Compressed 33-byte public key.
///
/// # Safety
/// `kp` must be a live handle; `out` must have room for 33 bytes.
#[no_mangle]
pub unsafe extern "C" fn ft_keypair_public_key(kp: *const FtKeyPair, out: *mut u8) -> FtStatus {
    guard(|| put_bytes(out, &handle(kp, "kp")?.key.public_key().0, "out"))
}

/// 20-byte address.
///
/// # Safety
/// `kp` must be a live handle; `out` must have room for 20 bytes.
#[no_mangle]
pub unsafe extern "C" fn ft_keypair_address(kp: *const FtKeyPair, out: *mut u8) -> FtStatus {
    guard(|| put_bytes(out, &handle(kp, "kp")?.key.address().0, "out"))
}

/// # Safety
/// `kp` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ft_keypair_free(kp: *mut FtKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

/// Signs a 32-byte digest into the 64-byte `sig`.
///
/// # Safety
/// `kp` must be a live handle; `msg` 32 readable bytes; `sig` 64 writable.
#[no_mangle]
pub unsafe extern "C" fn ft_sign(kp: *const FtKeyPair, msg: *const u8, sig: *mut u8) -> FtStatus {
    guard(|| {
        let key = &handle(kp, "kp")?.key;
        let msg = Digest(array_arg::<32>(msg, "msg")?);
        put_bytes(sig, &crypto::sign(key, &msg).0, "sig")
    })
}

/// Whether `sig` is a valid signature of `msg` under `pub_key`. Null
/// arguments and malformed keys verify as false.
///
/// # Safety
/// Non-null pointers must cover 33, 32 and 64 readable bytes.
#[no_mangle]
pub unsafe extern "C" fn ft_verify(pub_key: *const u8, msg: *const u8, sig: *const u8) -> bool {
    catch_unwind(|| {
        let (Ok(pk), Ok(m), Ok(s)) = (
            array_arg::<33>(pub_key, "pub_key"),
            array_arg::<32>(msg, "msg"),
            array_arg::<64>(sig, "sig"),
        ) else {
            return false;
        };
        crypto::verify(&PublicKey(pk), &Digest(m), &Signature(s))
    })
    .unwrap_or(false)
}

// ---- trust -------------------------------------------------------------

/// Credibility after one more rating: `(trust * rating + prev) / 2`, all
/// raw fixed-point values in `[0, FT_FIXED_SCALE]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_cred_update(prev: u64, trust: u64, rating: u64, out: *mut u64) -> FtStatus {
    guard(|| {
        let c = cred_update(unit(prev, "prev")?, unit(trust, "trust")?, unit(rating, "rating")?);
        put(out, c.raw(), "out")
    })
}

/// Weighted combination of satisfaction and authentication. Both weights
/// zero is a range error.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_overall_trust(
    sat: u64,
    auth: u64,
    weight_sat: u64,
    weight_auth: u64,
    out: *mut u64,
) -> FtStatus {
    guard(|| {
        let w = Weights {
            sat: unit(weight_sat, "weight_sat")?,
            auth: unit(weight_auth, "weight_auth")?,
        };
        let t =
            overall_trust(unit(sat, "sat")?, unit(auth, "auth")?, &w).map_err(|e| (FtStatus::Range, e.to_string()))?;
        put(out, t.raw(), "out")
    })
}
