#ifndef PSTGCN_H
#define PSTGCN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum PstgcnStatus {
  PstgcnStatus_Ok = 0,
  PstgcnStatus_NullArgument = 1,
  PstgcnStatus_InvalidUtf8 = 2,
  PstgcnStatus_InvalidTopology = 3,
  PstgcnStatus_InvalidDescriptor = 4,
  PstgcnStatus_IoError = 5,
  PstgcnStatus_InternalError = 6,
} PstgcnStatus;

/**
 * Opaque model descriptor handle.
 */
typedef struct PstgcnDescriptor PstgcnDescriptor;

/**
 * Opaque skeleton topology handle.
 */
typedef struct PstgcnTopology PstgcnTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread, or NULL.
 * The pointer stays valid until the next failing call on the thread.
 */
const char *pstgcn_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *pstgcn_version(void);

/**
 * Build a preset topology (`ntu25`, `openpose18`, `toy11`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PstgcnStatus pstgcn_topology_preset(const char *name, struct PstgcnTopology **out);

/**
 * Load a topology from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PstgcnStatus pstgcn_topology_load(const char *path, struct PstgcnTopology **out);

/**
 * Number of joints in the topology.
 *
 * # Safety
 * `topology` must come from a `pstgcn_topology_*` constructor.
 */
enum PstgcnStatus pstgcn_topology_joint_count(const struct PstgcnTopology *topology,
                                              uintptr_t *out);

/**
 * Validate the topology, including connectivity.
 *
 * # Safety
 * `topology` must come from a `pstgcn_topology_*` constructor.
 */
enum PstgcnStatus pstgcn_topology_validate(const struct PstgcnTopology *topology);

/**
 * Release a topology handle; NULL is allowed.
 *
 * # Safety
 * `topology` must be NULL or an owned handle not freed before.
 */
void pstgcn_topology_free(struct PstgcnTopology *topology);

/**
 * Load a model descriptor from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PstgcnStatus pstgcn_descriptor_load(const char *path, struct PstgcnDescriptor **out);

/**
 * Number of layers in the descriptor.
 *
 * # Safety
 * `descriptor` must come from `pstgcn_descriptor_load`.
 */
enum PstgcnStatus pstgcn_descriptor_layer_count(const struct PstgcnDescriptor *descriptor,
                                                uintptr_t *out);

/**
 * Release a descriptor handle; NULL is allowed.
 *
 * # Safety
 * `descriptor` must be NULL or an owned handle not freed before.
 */
void pstgcn_descriptor_free(struct PstgcnDescriptor *descriptor);

/**
 * Parameter and FLOP totals for a descriptor at input length `frames`.
 * `flops_per_mac` must be 1 or 2.
 *
 * # Safety
 * `descriptor` must come from `pstgcn_descriptor_load`; the out
 * pointers must be valid.
 */
enum PstgcnStatus pstgcn_complexity(const struct PstgcnDescriptor *descriptor,
                                    uintptr_t frames,
                                    uint32_t flops_per_mac,
                                    uint64_t *out_params,
                                    uint64_t *out_flops);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* PSTGCN_H */
