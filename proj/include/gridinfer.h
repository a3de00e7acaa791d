/* gridinfer C API: power-injection inference and power-flow verification.
 *
 * All functions return gi_status; GI_OK is 0. On failure, gi_last_error()
 * returns a thread-local message describing what went wrong. Handles are
 * opaque and must be released with their matching *_close function.
 */
#ifndef GRIDINFER_H
#define GRIDINFER_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gi_status {
  GI_OK = 0,
  GI_ERR_CONFIG = 2,  /* bad files, invalid parameters, schema violations */
  GI_ERR_NUMERIC = 3, /* non-convergence, singular systems, non-finite data */
} gi_status;

const char* gi_version(void);

/* Message for the most recent failure on this thread; never NULL. */
const char* gi_last_error(void);

/* ---- experiment harness -------------------------------------------------
 *
 * mode is one of: "fit", "gens", "sweep-m", "sweep-train-size", "flows",
 * "analyze-weights". config_json is the experiment-config JSON object
 * (documented in the README); out_dir receives the report files plus a
 * manifest with content hashes.
 */
gi_status gi_run(const char* mode, const char* config_json,
                 const char* out_dir, uint64_t seed, int workers);

/* Synthesize a dataset to CSV; cache_out may be NULL to skip the binary
 * cache. config_json is a full experiment config (its dataset section is
 * used). */
gi_status gi_synthesize(const char* config_json, uint64_t seed,
                        const char* csv_out, const char* cache_out);

/* ---- network handle ------------------------------------------------------ */

typedef struct gi_network gi_network;

gi_status gi_network_open(const char* path, gi_network** out);
void gi_network_close(gi_network* net);
int gi_network_bus_count(const gi_network* net);
int gi_network_line_count(const gi_network* net);

/* Newton-Raphson solve with per-bus injections (length = bus count,
 * network bus order; slack entry ignored). v_out / theta_out are caller
 * buffers of length bus count; iterations_out may be NULL. Returns
 * GI_ERR_NUMERIC when the solve does not converge. */
gi_status gi_network_solve(const gi_network* net, const double* p_set,
                           const double* q_set, double tolerance,
                           int max_iter, double* v_out, double* theta_out,
                           int* iterations_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GRIDINFER_H */
