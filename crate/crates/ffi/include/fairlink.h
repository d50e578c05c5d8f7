#ifndef FAIRLINK_H
#define FAIRLINK_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_IO = 3,
  FL_STATUS_PARSE = 4,
  FL_STATUS_INVALID_GRAPH = 5,
  FL_STATUS_SPLIT = 6,
  FL_STATUS_PROJECTION = 7,
  FL_STATUS_TRAINING = 8,
  FL_STATUS_METRIC = 9,
  FL_STATUS_CONFIG = 10,
  FL_STATUS_JSON = 11,
  FL_STATUS_PANIC = 12,
} FlStatus;

// Graph plus sensitive attribute partition.
typedef struct FlDataset FlDataset;

// A trained link-prediction model.
typedef struct FlModel FlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *fl_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void fl_string_free(char *s);

// Loads an edge list (`u v` per line) and a `node_id,label` CSV.
//
// # Safety
// Paths must be nul-terminated strings; `out` must be writable.
enum FlStatus fl_dataset_load(const char *edges_path,
                              const char *attrs_path,
                              bool bipartite,
                              struct FlDataset **out);

// Samples a stochastic block model with `groups` equal-size groups.
//
// # Safety
// `out` must be writable.
enum FlStatus fl_dataset_synth(uintptr_t nodes,
                               uintptr_t groups,
                               double p_intra,
                               double p_inter,
                               uint64_t seed,
                               struct FlDataset **out);

// # Safety
// `ds` must be a live dataset handle or null.
uintptr_t fl_dataset_node_count(const struct FlDataset *ds);

// # Safety
// `ds` must be a live dataset handle or null.
uintptr_t fl_dataset_edge_count(const struct FlDataset *ds);

// # Safety
// `ds` must be a live dataset handle or null.
uintptr_t fl_dataset_group_count(const struct FlDataset *ds);

// # Safety
// `ds` must come from this library and not have been freed. Null is ignored.
void fl_dataset_free(struct FlDataset *ds);

// Trains a model on the whole dataset. `config_json` is a JSON object
// setting any training fields (e.g. `{"model":"dot","criterion":"dp"}`);
// null uses the defaults.
//
// # Safety
// `ds` must be a live dataset handle; `out` must be writable.
enum FlStatus fl_train(const struct FlDataset *ds, const char *config_json, struct FlModel **out);

// Edge probability of the pair `(i, j)`.
//
// # Safety
// `model` must be a live model handle; `out` must be writable.
enum FlStatus fl_model_probability(const struct FlModel *model,
                                   uintptr_t i,
                                   uintptr_t j,
                                   double *out);

// # Safety
// `model` must be a live model handle or null.
uintptr_t fl_model_node_count(const struct FlModel *model);

// Serializes the model and its training config as a JSON checkpoint.
//
// # Safety
// `model` must be a live model handle; `out_json` must be writable.
enum FlStatus fl_model_to_json(const struct FlModel *model, char **out_json);

// Restores a model from a checkpoint written by `fl_model_to_json`.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum FlStatus fl_model_from_json(const char *json, struct FlModel **out);

// # Safety
// `model` must come from this library and not have been freed. Null is ignored.
void fl_model_free(struct FlModel *model);

// Projects the model onto the fair set for `criterion` (`"dp"` or `"eo"`)
// and writes a JSON object with the KL divergence, multipliers and
// per-constraint values and targets.
//
// # Safety
// Handles must be live; `criterion` nul-terminated; `out_json` writable.
enum FlStatus fl_model_projection(const struct FlModel *model,
                                  const struct FlDataset *ds,
                                  const char *criterion,
                                  char **out_json);

// Holds out `test_frac` of the edges (seeded), trains on the rest and writes
// the evaluation report (AUC, DP, EO, RDP, RB) as JSON.
//
// # Safety
// `ds` must be a live handle; `config_json` null or nul-terminated;
// `out_json` writable.
enum FlStatus fl_evaluate(const struct FlDataset *ds,
                          const char *config_json,
                          double test_frac,
                          uint64_t seed,
                          char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRLINK_H */
