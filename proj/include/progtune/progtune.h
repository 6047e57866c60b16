/*
 * progtune - progressive fine-tuning experiments over a miniature
 * Transformer encoder: block partitioning, shrinking/growing stage
 * schedules, PEFT regimes (adapter / bitfit / lora), updated-parameter
 * accounting, and desk-scale training runs.
 *
 * C interface of the shared library. All functions return a pgt_status;
 * handles are opaque and must be released with the matching *_free call.
 * pgt_last_error() describes the most recent failure on the calling thread.
 * Strings returned through char** outputs are heap-allocated and must be
 * released with pgt_string_free().
 */

#ifndef PROGTUNE_H
#define PROGTUNE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pgt_status {
    PGT_OK = 0,
    PGT_ERR_CONFIG = 1,   /* invalid configuration or dimensions */
    PGT_ERR_SHAPE = 2,    /* tensor shape mismatch */
    PGT_ERR_INDEX = 3,    /* id / index out of range */
    PGT_ERR_LENGTH = 4,   /* sequence longer than allowed */
    PGT_ERR_STATE = 5,    /* operation does not fit the object's state */
    PGT_ERR_CONTRACT = 6, /* precondition violated */
    PGT_ERR_IO = 7,       /* file system failure */
    PGT_ERR_FORMAT = 8,   /* malformed file content */
    PGT_ERR_FREEZE = 9,   /* frozen parameter was touched */
    PGT_ERR_DIVERGED = 10,/* training loss became non-finite */
    PGT_ERR_ORACLE = 11,  /* gradient-check oracle precondition failed */
    PGT_ERR_INVALID = 12, /* invalid argument */
    PGT_ERR_INTERNAL = 13
} pgt_status;

const char* pgt_status_name(pgt_status status);
/* Message for the last failure on this thread; valid until the next call. */
const char* pgt_last_error(void);
const char* pgt_version(void);
void pgt_string_free(char* text);

/* ------------------------------------------------------------------ */
/* Run configuration: flat key/value file with [model] [task] [train]  */
/* [schedule] [peft] [output] sections. One file determines a run.     */
/* ------------------------------------------------------------------ */

typedef struct pgt_config pgt_config;

pgt_status pgt_config_load(const char* path, pgt_config** out);
pgt_status pgt_config_parse(const char* text, pgt_config** out);
/* key is "section.key", e.g. ("schedule.variant", "wolb"). */
pgt_status pgt_config_override(pgt_config* config, const char* key, const char* value);
pgt_status pgt_config_render(const pgt_config* config, char** out_text);
pgt_status pgt_config_validate(const pgt_config* config);
void pgt_config_free(pgt_config* config);

/* ------------------------------------------------------------------ */
/* Static updated-parameter accounting (no weights instantiated).      */
/* ------------------------------------------------------------------ */

typedef struct pgt_count_spec {
    const char* arch;      /* "bert-base" | "bert-large" | "custom" */
    /* dimensions, consulted when arch == "custom" */
    int64_t blocks, hidden, heads, ffn, vocab, max_positions, type_vocab;
    const char* head;      /* "classifier" | "qa" */
    int include_pooler;    /* -1 auto (classifier: on, qa: off), 0 off, 1 on */
    int64_t num_classes;
    int64_t epochs;        /* stage count T, bound one-to-one to epochs */
    const char* mode;      /* "ft" | "progtune" */
    const char* variant;   /* "standard" | "wolb" | "fromhb" */
    const char* peft;      /* "full" | "adapter" | "bitfit" | "lora" */
    int64_t adapter_bottleneck;
    int64_t lora_rank;
    double lora_alpha;
    const char* lora_targets; /* comma list out of wq,wk,wv,wo */
} pgt_count_spec;

void pgt_count_spec_init(pgt_count_spec* spec);

typedef struct pgt_ledger pgt_ledger;

pgt_status pgt_count(const pgt_count_spec* spec, pgt_ledger** out);
int64_t pgt_ledger_epochs(const pgt_ledger* ledger);
/* elements updated in the given 1-based epoch; negative on bad input */
int64_t pgt_ledger_epoch_updated(const pgt_ledger* ledger, int64_t epoch);
int64_t pgt_ledger_cumulative(const pgt_ledger* ledger);
/* 1 - cumulative / (full fine-tuning cumulative) */
double pgt_ledger_reduction(const pgt_ledger* ledger);
int64_t pgt_ledger_total_params(const pgt_ledger* ledger);
int64_t pgt_ledger_trainable_params(const pgt_ledger* ledger);
/* format: "csv" | "jsonl"; rows are (epoch, tag class, count) + summary */
pgt_status pgt_ledger_render(const pgt_ledger* ledger, const char* format, char** out_text);
pgt_status pgt_ledger_export(const pgt_ledger* ledger, const char* path, const char* format);
void pgt_ledger_free(pgt_ledger* ledger);

/* ------------------------------------------------------------------ */
/* Experiments.                                                        */
/* ------------------------------------------------------------------ */

typedef struct pgt_run pgt_run;

/* Full schedule-driven training run per the config. */
pgt_status pgt_train(const pgt_config* config, pgt_run** out);
/* Per-block contribution probe: L runs training E + B_i + H only. */
pgt_status pgt_probe(const pgt_config* config, pgt_run** out);
/* standard / wolb / fromhb on identical data and seed, plus a comparison. */
pgt_status pgt_ablate(const pgt_config* config, pgt_run** out);

pgt_status pgt_run_summary(const pgt_run* run, char** out_text);
/* Writes run.json, metric exports, tables and the final checkpoint.
 * out_listing (optional) receives the newline-separated file list. */
pgt_status pgt_run_write_artifacts(const pgt_run* run, const char* dir, char** out_listing);
int64_t pgt_run_epochs(const pgt_run* run);
/* name: "loss" | "train_acc" | "eval_acc" | "lr_start" (epoch is 1-based),
 * or "probe_acc" where the epoch argument is the 1-based block index. */
pgt_status pgt_run_metric(const pgt_run* run, const char* name, int64_t epoch, double* out);
pgt_status pgt_run_updated_params(const pgt_run* run, int64_t epoch, int64_t* out);
void pgt_run_free(pgt_run* run);

/* Re-render a saved run.json into csv or jsonl at out_path. */
pgt_status pgt_export_run(const char* run_json_path, const char* out_path, const char* format,
                          char** out_listing);

/* ------------------------------------------------------------------ */
/* Models and checkpoints.                                             */
/* ------------------------------------------------------------------ */

typedef struct pgt_model pgt_model;

/* Builds the configured model (PEFT applied) with the configured seed. */
pgt_status pgt_model_build(const pgt_config* config, pgt_model** out);
pgt_status pgt_model_param_total(const pgt_model* model, int64_t* out);
/* Binary checkpoint, bit-exact round trip: magic "PGTN", version u32 LE,
 * tensor count u32 LE, then per tensor name/tag/rank/dims/payload. */
pgt_status pgt_model_save(const pgt_model* model, const char* path);
pgt_status pgt_model_load(pgt_model* model, const char* path);
/* ids is row-major [batch * seq_len]; id 0 is the pad token and is masked
 * out of attention. out must hold batch*num_classes (classifier) or
 * batch*seq_len*2 (qa) doubles, which is checked against out_len. */
pgt_status pgt_model_logits(const pgt_model* model, const int64_t* ids, int64_t batch,
                            int64_t seq_len, double* out, int64_t out_len);
void pgt_model_free(pgt_model* model);

#ifdef __cplusplus
}
#endif

#endif /* PROGTUNE_H */
