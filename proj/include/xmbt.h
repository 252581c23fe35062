/* xmbt — unsupervised text/video translation toolkit.
 *
 * C interface over the core library: opaque handles, status codes, and
 * thread-local error messages. Status values double as CLI exit codes.
 */
#ifndef XMBT_H
#define XMBT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum xmbt_status {
    XMBT_OK = 0,
    XMBT_USAGE_ERROR = 2,      /* bad arguments, bad config, malformed input */
    XMBT_DEPENDENCY_ERROR = 3, /* missing corpus/checkpoint prerequisite */
    XMBT_RUNTIME_ERROR = 4     /* anything else */
} xmbt_status;

const char* xmbt_version(void);

/* message for the most recent failing call on this thread; never NULL */
const char* xmbt_last_error(void);

/* frees strings returned through char** out-parameters */
void xmbt_string_free(char* s);

/* ---------------- configuration ---------------- */

typedef struct xmbt_config xmbt_config;

xmbt_status xmbt_config_create(xmbt_config** out);
xmbt_status xmbt_config_load(const char* path, xmbt_config** out);
xmbt_status xmbt_config_set(xmbt_config* cfg, const char* key, const char* value);
xmbt_status xmbt_config_serialize(const xmbt_config* cfg, char** out);
xmbt_status xmbt_config_save(const xmbt_config* cfg, const char* path);
void xmbt_config_free(xmbt_config* cfg);

/* ---------------- stage runner ---------------- */

typedef struct xmbt_run_options {
    const char* stage;       /* gen-corpus | pretrain-text | pretrain-video | joint-train |
                                translate | generate | evaluate | check-order | ablate */
    const char* config_path; /* NULL -> built-in defaults */
    const char* out_dir;     /* workspace directory */
    uint64_t seed;
    int force;
    int from_scratch;
    const char* checkpoint;  /* translate/generate/evaluate override */
    const char* input_path;  /* translate: clip base path; check-order: gloss csv */
    const char* text;        /* generate: input sentence */
    const char* texts_path;  /* check-order: reference sentences */
    const char* matrix;      /* ablate: aligner | freezing | multitask */
    const char* output_path; /* translate/generate artifact override */
    const char* const* overrides; /* "key=value" strings applied over the config file */
    size_t n_overrides;
} xmbt_run_options;

/* Runs one stage to completion. stdout_text (optional) receives what the CLI
 * prints on success. */
xmbt_status xmbt_run(const xmbt_run_options* options, char** stdout_text);

/* ---------------- direct model access ---------------- */

typedef struct xmbt_model xmbt_model;

xmbt_status xmbt_model_open(const char* checkpoint_dir, xmbt_model** out);
void xmbt_model_free(xmbt_model* model);

/* video clip (base path of the .bin/.json pair) -> sentence */
xmbt_status xmbt_model_translate(xmbt_model* model, const char* clip_base_path, char** text_out);

/* sentence -> clip written at out_clip_base(.bin/.json); sidecar_json_out
 * (optional) receives the round-trip report */
xmbt_status xmbt_model_generate(xmbt_model* model, const char* text, const char* out_clip_base,
                                char** sidecar_json_out);

#ifdef __cplusplus
}
#endif

#endif /* XMBT_H */
