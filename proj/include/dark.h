/* C interface to the reasoning library. Every call returns a dark_status;
 * on failure dark_last_error() describes the problem (per thread). Strings
 * returned through char** are owned by the caller and released with
 * dark_string_free. */
#ifndef DARK_H
#define DARK_H

#include <stddef.h>
#include <stdint.h>

#if defined(DARK_BUILDING_LIBRARY)
#define DARK_API __attribute__((visibility("default")))
#else
#define DARK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dark_status {
  DARK_OK = 0,
  DARK_E_INVALID_ARGUMENT = 1,
  DARK_E_PARSE = 2,
  DARK_E_IO = 3,
  DARK_E_FORMAT = 4,
  DARK_E_SAMPLING = 5,
  DARK_E_NUMERIC = 6,
  DARK_E_UNSUPPORTED = 7,
  DARK_E_OUT_OF_RANGE = 8,
  DARK_E_BUFFER_TOO_SMALL = 9,
  DARK_E_INTERNAL = 99
} dark_status;

typedef struct dark_graphs dark_graphs;
typedef struct dark_model dark_model;

DARK_API const char* dark_version(void);
DARK_API const char* dark_last_error(void);
DARK_API void dark_string_free(char* s);

/* Pipeline commands: ingest, sample-queries, train, train-rl, abduce,
 * deduce, eval, report. Configs are JSON objects. */
DARK_API dark_status dark_command_count(size_t* out);
DARK_API dark_status dark_command_name(size_t index, const char** out);
DARK_API dark_status dark_default_config(const char* command, char** out_json);
/* Merges config_json over the defaults, runs the command and returns the
 * run.json manifest it wrote. */
DARK_API dark_status dark_pipeline_run(const char* command, const char* config_json, char** out_manifest_json);

/* Split graphs written by ingest. */
DARK_API dark_status dark_graphs_load(const char* dir, dark_graphs** out);
DARK_API void dark_graphs_free(dark_graphs* g);
DARK_API dark_status dark_graphs_size(const dark_graphs* g, size_t* entities, size_t* relations);
DARK_API dark_status dark_entity_id(const dark_graphs* g, const char* name, int32_t* out);
DARK_API dark_status dark_relation_id(const dark_graphs* g, const char* name, int32_t* out);

/* Answers of a pattern grounding on one split ("train", "valid", "test").
 * When capacity is too small, *count receives the needed size and
 * DARK_E_BUFFER_TOO_SMALL is returned. */
DARK_API dark_status dark_execute(const dark_graphs* g, const char* split, const char* pattern,
                                  const int32_t* anchors, size_t n_anchors, const int32_t* relations,
                                  size_t n_relations, int32_t* answers, size_t capacity, size_t* count);

DARK_API dark_status dark_jaccard(const int32_t* a, size_t na, const int32_t* b, size_t nb, double* out);

/* Checkpoint plus the graphs it was trained against. */
DARK_API dark_status dark_model_load(const char* checkpoint, const char* graph_dir, dark_model** out);
DARK_API void dark_model_free(dark_model* m);

/* Deduction with `steps` reverse steps and greedy decoding. */
DARK_API dark_status dark_deduce(const dark_model* m, const char* pattern, const int32_t* anchors, size_t n_anchors,
                                 const int32_t* relations, size_t n_relations, size_t steps, uint64_t seed,
                                 int32_t* answers, size_t capacity, size_t* count);

/* Self-reflective abduction. sampler_json may hold steps, reflect_every,
 * candidates, temperature and verify ("model" or "graph:<split>"); NULL
 * keeps the defaults. The result JSON has query_tokens, query (or null),
 * parse_error and model_evals. */
DARK_API dark_status dark_abduce(const dark_model* m, const int32_t* observation, size_t n, const char* sampler_json,
                                 uint64_t seed, char** out_json);

#ifdef __cplusplus
}
#endif

#endif
