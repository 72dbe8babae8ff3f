#ifndef PUFLOCK_H
#define PUFLOCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values match the exit codes of the `puflock` CLI where the
 * categories overlap.
 */
typedef enum PuflockStatus {
  PUFLOCK_STATUS_OK = 0,
  PUFLOCK_STATUS_INVALID_ARGUMENT = 2,
  PUFLOCK_STATUS_PARSE = 3,
  PUFLOCK_STATUS_DIMENSION = 4,
  PUFLOCK_STATUS_CONFIG = 6,
  PUFLOCK_STATUS_IO = 7,
  PUFLOCK_STATUS_NULL_POINTER = 8,
  PUFLOCK_STATUS_PANIC = 9,
} PuflockStatus;

/**
 * Labelled evaluation data.
 */
typedef struct PuflockDataset PuflockDataset;

/**
 * Helper data of one encrypted layer.
 */
typedef struct PuflockHelper PuflockHelper;

/**
 * Dense network.
 */
typedef struct PuflockModel PuflockModel;

/**
 * Simulated XOR arbiter PUF of one machine.
 */
typedef struct PuflockPuf PuflockPuf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL if it succeeded.
 *
 * The string is owned by the library and stays valid until the next
 * status-returning call on the same thread.
 */
const char *puflock_last_error_message(void);

/**
 * Create the PUF of machine `machine_seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum PuflockStatus puflock_puf_new(uint64_t machine_seed,
                                   uint32_t n_stages,
                                   uint32_t k_chains,
                                   double noise_sigma,
                                   struct PuflockPuf **out);

/**
 * # Safety
 * `puf` must be NULL or a handle from [`puflock_puf_new`] not yet freed.
 */
void puflock_puf_free(struct PuflockPuf *puf);

/**
 * Writes `len` response bits (one per byte, 0 or 1) for `challenge`.
 *
 * # Safety
 * `puf` must be a live handle and `out_bits` must point to `len` writable
 * bytes.
 */
enum PuflockStatus puflock_puf_response(const struct PuflockPuf *puf,
                                        uint64_t challenge,
                                        uint8_t *out_bits,
                                        size_t len);

/**
 * The 32-bit key for `challenge`: response bit `i` is bit `i`.
 *
 * # Safety
 * `puf` must be a live handle and `out` a valid pointer.
 */
enum PuflockStatus puflock_puf_key32(const struct PuflockPuf *puf,
                                     uint64_t challenge,
                                     uint32_t *out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PuflockStatus puflock_model_load(const char *path, struct PuflockModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum PuflockStatus puflock_model_save(const struct PuflockModel *model, const char *path);

/**
 * Number of layers, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t puflock_model_layer_count(const struct PuflockModel *model);

/**
 * True when both models have identical shapes and weight bit patterns.
 *
 * # Safety
 * Both arguments must be NULL or live handles.
 */
bool puflock_model_bit_eq(const struct PuflockModel *a, const struct PuflockModel *b);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void puflock_model_free(struct PuflockModel *model);

/**
 * # Safety
 * Both paths must be NUL-terminated strings and `out` a valid pointer.
 */
enum PuflockStatus puflock_dataset_load_idx(const char *images,
                                            const char *labels,
                                            struct PuflockDataset **out);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void puflock_dataset_free(struct PuflockDataset *data);

/**
 * Top-1 accuracy as a `correct / total` pair.
 *
 * # Safety
 * Handles must be live; `correct` and `total` must be valid pointers.
 */
enum PuflockStatus puflock_model_evaluate(const struct PuflockModel *model,
                                          const struct PuflockDataset *data,
                                          uint64_t *correct,
                                          uint64_t *total);

/**
 * Encrypt `pct` percent of layer `layer_id` under `puf`. Produces a new
 * model and its helper data; the input model is left untouched.
 *
 * # Safety
 * Handles must be live; `out_model` and `out_helper` must be valid pointers.
 */
enum PuflockStatus puflock_encrypt_model(const struct PuflockModel *model,
                                         uint32_t layer_id,
                                         double pct,
                                         const struct PuflockPuf *puf,
                                         uint64_t rng_seed,
                                         struct PuflockModel **out_model,
                                         struct PuflockHelper **out_helper);

/**
 * Decrypt with the PUF of the current machine into a new model. On another
 * machine the result is a model with scrambled weights, not an error.
 *
 * # Safety
 * Handles must be live and `out_model` a valid pointer.
 */
enum PuflockStatus puflock_decrypt_model(const struct PuflockModel *model,
                                         const struct PuflockHelper *helper,
                                         const struct PuflockPuf *puf,
                                         struct PuflockModel **out_model);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PuflockStatus puflock_helper_load(const char *path, struct PuflockHelper **out);

/**
 * # Safety
 * `helper` must be a live handle and `path` a NUL-terminated string.
 */
enum PuflockStatus puflock_helper_save(const struct PuflockHelper *helper, const char *path);

/**
 * Number of encrypted weights, or 0 for a NULL handle.
 *
 * # Safety
 * `helper` must be NULL or a live handle.
 */
size_t puflock_helper_len(const struct PuflockHelper *helper);

/**
 * # Safety
 * `helper` must be NULL or a handle not yet freed.
 */
void puflock_helper_free(struct PuflockHelper *helper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUFLOCK_H */
