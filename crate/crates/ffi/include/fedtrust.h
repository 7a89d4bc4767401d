#ifndef FEDTRUST_H
#define FEDTRUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Raw value of 1.0 in the fixed-point trust representation.
 */
#define FT_FIXED_SCALE 1000000000000

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_ARGUMENT = 1,
  FT_STATUS_INVALID_UTF8 = 2,
  FT_STATUS_CONFIG = 3,
  FT_STATUS_IO = 4,
  FT_STATUS_INVALID_LEDGER = 5,
  FT_STATUS_RANGE = 6,
  FT_STATUS_PANIC = 99,
} FtStatus;

typedef struct FtKeyPair FtKeyPair;

/**
 * A ledger that passed verification.
 */
typedef struct FtLedger FtLedger;

/**
 * A simulated network built from a scenario.
 */
typedef struct FtSim FtSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ft_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ft_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ft_string_free(char *s);

/**
 * Builds a network from a scenario given as TOML text.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
enum FtStatus ft_sim_new(const char *config_toml, struct FtSim **out);

/**
 * Runs the scenario to its configured end.
 *
 * # Safety
 * `sim` must be a live handle from `ft_sim_new`.
 */
enum FtStatus ft_sim_run(struct FtSim *sim);

/**
 * Processes every event due at or before `end_ms`.
 *
 * # Safety
 * `sim` must be a live handle from `ft_sim_new`.
 */
enum FtStatus ft_sim_run_until(struct FtSim *sim, uint64_t end_ms);

/**
 * Simulated time in ms.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_sim_now(const struct FtSim *sim, uint64_t *out);

/**
 * Height of the reference node's canonical chain.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_sim_height(const struct FtSim *sim, uint64_t *out);

/**
 * Writes the reference node's canonical chain as a ledger file.
 *
 * # Safety
 * `sim` must be a live handle; `path` a NUL-terminated string.
 */
enum FtStatus ft_sim_write_ledger(const struct FtSim *sim, const char *path);

/**
 * The event log as JSON lines. Free with `ft_string_free`.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_sim_events_jsonl(const struct FtSim *sim, char **out);

/**
 * Run report as JSON. Free with `ft_string_free`.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_sim_report_json(const struct FtSim *sim, char **out);

/**
 * # Safety
 * `sim` must be null or a handle from `ft_sim_new`, freed once.
 */
void ft_sim_free(struct FtSim *sim);

/**
 * Reads and fully verifies a ledger file. An invalid ledger yields
 * `FT_STATUS_INVALID_LEDGER` with the first failure as the message.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FtStatus ft_ledger_open(const char *path, struct FtLedger **out);

/**
 * As `ft_ledger_open`, from an in-memory ledger file.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum FtStatus ft_ledger_from_bytes(const uint8_t *data, size_t len, struct FtLedger **out);

/**
 * # Safety
 * `ledger` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_ledger_height(const struct FtLedger *ledger, uint64_t *out);

/**
 * Writes the 32-byte tip hash to `out`.
 *
 * # Safety
 * `ledger` must be a live handle; `out` must have room for 32 bytes.
 */
enum FtStatus ft_ledger_tip_hash(const struct FtLedger *ledger, uint8_t *out);

/**
 * Per-CSP and per-user trust replayed from the ledger, as JSON. Free
 * with `ft_string_free`.
 *
 * # Safety
 * `ledger` must be a live handle; `out` must be writable.
 */
enum FtStatus ft_ledger_trust_report_json(const struct FtLedger *ledger, char **out);

/**
 * # Safety
 * `ledger` must be null or a handle from this library, freed once.
 */
void ft_ledger_free(struct FtLedger *ledger);

/**
 * SHA-256 of `len` bytes into the 32-byte `out`.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` to 32 writable bytes.
 */
enum FtStatus ft_hash(const uint8_t *data, size_t len, uint8_t *out);

/**
 * Deterministic key pair from a 32-byte seed.
 *
 * # Safety
 * `seed` must point to 32 readable bytes; `out` must be writable.
 */
enum FtStatus ft_keypair_from_seed(const uint8_t *seed, struct FtKeyPair **out);

/**
 * Compressed 33-byte public key.
 *
 * # Safety
 * `kp` must be a live handle; `out` must have room for 33 bytes.
 */
enum FtStatus ft_keypair_public_key(const struct FtKeyPair *kp, uint8_t *out);

/**
 * 20-byte address.
 *
 * # Safety
 * `kp` must be a live handle; `out` must have room for 20 bytes.
 */
enum FtStatus ft_keypair_address(const struct FtKeyPair *kp, uint8_t *out);

/**
 * # Safety
 * `kp` must be null or a handle from this library, freed once.
 */
void ft_keypair_free(struct FtKeyPair *kp);

/**
 * Signs a 32-byte digest into the 64-byte `sig`.
 *
 * # Safety
 * `kp` must be a live handle; `msg` 32 readable bytes; `sig` 64 writable.
 */
enum FtStatus ft_sign(const struct FtKeyPair *kp, const uint8_t *msg, uint8_t *sig);

/**
 * Whether `sig` is a valid signature of `msg` under `pub_key`. Null
 * arguments and malformed keys verify as false.
 *
 * # Safety
 * Non-null pointers must cover 33, 32 and 64 readable bytes.
 */
bool ft_verify(const uint8_t *pub_key, const uint8_t *msg, const uint8_t *sig);

/**
 * Credibility after one more rating: `(trust * rating + prev) / 2`, all
 * raw fixed-point values in `[0, FT_FIXED_SCALE]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtStatus ft_cred_update(uint64_t prev, uint64_t trust, uint64_t rating, uint64_t *out);

/**
 * Weighted combination of satisfaction and authentication. Both weights
 * zero is a range error.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtStatus ft_overall_trust(uint64_t sat,
                               uint64_t auth,
                               uint64_t weight_sat,
                               uint64_t weight_auth,
                               uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDTRUST_H */
