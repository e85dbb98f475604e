/*
 * C interface to the docnmt library.
 *
 * Every function returns a docnmt_status. On failure the message for the
 * calling thread is available from docnmt_last_error() until the next call
 * into the library on that thread. Handles are opaque and owned by the
 * caller; release them with the matching *_destroy function.
 */
#ifndef DOCNMT_DOCNMT_H_
#define DOCNMT_DOCNMT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(DOCNMT_BUILDING_LIBRARY)
#define DOCNMT_API __attribute__((visibility("default")))
#else
#define DOCNMT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum docnmt_status {
  DOCNMT_OK = 0,
  DOCNMT_ERR_INVALID_ARGUMENT = 1,
  DOCNMT_ERR_IO = 2,
  DOCNMT_ERR_FORMAT = 3,
  DOCNMT_ERR_DIMENSION = 4,
  DOCNMT_ERR_NUMERIC = 5,
  DOCNMT_ERR_STATE = 6,
  DOCNMT_ERR_OUT_OF_RANGE = 7,
  DOCNMT_ERR_INTERNAL = 99
} docnmt_status;

typedef struct docnmt_config docnmt_config;
typedef struct docnmt_model docnmt_model;
typedef struct docnmt_vocab docnmt_vocab;

DOCNMT_API const char* docnmt_version(void);
DOCNMT_API const char* docnmt_status_name(docnmt_status status);
DOCNMT_API const char* docnmt_last_error(void);

/* Run configuration: flat key/value settings shared by all commands. */
DOCNMT_API docnmt_status docnmt_config_create(docnmt_config** out);
DOCNMT_API void docnmt_config_destroy(docnmt_config* config);
DOCNMT_API docnmt_status docnmt_config_set(docnmt_config* config, const char* key, const char* value);
/* Reads `key = value` lines; keys already set keep their value only if set later. */
DOCNMT_API docnmt_status docnmt_config_load_file(docnmt_config* config, const char* path);
/* Copies the value for `key` into `buffer` (NUL-terminated). `*needed` receives
 * the required size including the terminator. Unset keys are an
 * DOCNMT_ERR_INVALID_ARGUMENT. */
DOCNMT_API docnmt_status docnmt_config_get(const docnmt_config* config, const char* key, char* buffer,
                                           size_t capacity, size_t* needed);

/* Commands. Progress lines are written to stderr unless quiet is set. */
DOCNMT_API docnmt_status docnmt_run(const char* command, const docnmt_config* config, int quiet);
DOCNMT_API docnmt_status docnmt_preprocess(const docnmt_config* config);
DOCNMT_API docnmt_status docnmt_train(const docnmt_config* config);
DOCNMT_API docnmt_status docnmt_translate(const docnmt_config* config);
DOCNMT_API docnmt_status docnmt_evaluate(const docnmt_config* config);

/* Vocabularies: one token per line in id order. */
DOCNMT_API docnmt_status docnmt_vocab_load(const char* path, docnmt_vocab** out);
DOCNMT_API void docnmt_vocab_destroy(docnmt_vocab* vocab);
DOCNMT_API size_t docnmt_vocab_size(const docnmt_vocab* vocab);
DOCNMT_API docnmt_status docnmt_vocab_id(const docnmt_vocab* vocab, const char* token, uint32_t* id);

/* Model checkpoints. mode is 0 for baseline, 1 for the gated model. */
DOCNMT_API docnmt_status docnmt_model_load(const char* path, docnmt_model** out);
DOCNMT_API void docnmt_model_destroy(docnmt_model* model);
DOCNMT_API docnmt_status docnmt_model_save(const docnmt_model* model, const char* path);
DOCNMT_API int docnmt_model_mode(const docnmt_model* model);
DOCNMT_API size_t docnmt_model_hidden_size(const docnmt_model* model);

/* Translates `source` (whitespace-tokenized) given its preceding source
 * sentence `before` (NULL or "" for a document start). The translation is
 * written into `buffer` as in docnmt_config_get. ablate accepts
 * none|null|zgate0|rv. */
DOCNMT_API docnmt_status docnmt_translate_sentence(const docnmt_model* model, const docnmt_vocab* source_vocab,
                                                   const docnmt_vocab* target_vocab, const char* before,
                                                   const char* source, size_t width, const char* ablate,
                                                   uint64_t seed, char* buffer, size_t capacity, size_t* needed);

/* Metrics. */
DOCNMT_API docnmt_status docnmt_bleu(const char* const* hypotheses, const char* const* references, size_t count,
                                     int smooth, double* score);
DOCNMT_API docnmt_status docnmt_entropy(const double* distribution, size_t length, double* out);

#ifdef __cplusplus
}
#endif

#endif /* DOCNMT_DOCNMT_H_ */
