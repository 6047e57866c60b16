#include "progtune/progtune.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "experiment.hpp"

using namespace progtune;

// Opaque handle definitions.
struct pgt_config {
    RunConfig config;
};

struct pgt_ledger {
    CountOutcome outcome;
};

struct pgt_run {
    RunOutcome outcome;
};

struct pgt_model {
    Model model;
};

namespace {

thread_local std::string g_last_error;

pgt_status status_of(Errc code) {
    switch (code) {
    case Errc::config: return PGT_ERR_CONFIG;
    case Errc::shape: return PGT_ERR_SHAPE;
    case Errc::index: return PGT_ERR_INDEX;
    case Errc::length: return PGT_ERR_LENGTH;
    case Errc::state: return PGT_ERR_STATE;
    case Errc::contract: return PGT_ERR_CONTRACT;
    case Errc::io: return PGT_ERR_IO;
    case Errc::format: return PGT_ERR_FORMAT;
    case Errc::freeze_violation: return PGT_ERR_FREEZE;
    case Errc::diverged: return PGT_ERR_DIVERGED;
    case Errc::oracle: return PGT_ERR_ORACLE;
    case Errc::invalid_argument: return PGT_ERR_INVALID;
    }
    return PGT_ERR_INTERNAL;
}

template <typename Fn>
pgt_status wrap(Fn&& fn) {
    try {
        fn();
        return PGT_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PGT_ERR_INTERNAL;
    }
}

pgt_status invalid(const char* message) {
    g_last_error = message;
    return PGT_ERR_INVALID;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<std::string> split_targets(const char* csv) {
    std::vector<std::string> out;
    std::string cur;
    for (const char* p = csv; *p; ++p) {
        if (*p == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (*p != ' ') {
            cur.push_back(*p);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

extern "C" {

const char* pgt_status_name(pgt_status status) {
    switch (status) {
    case PGT_OK: return "ok";
    case PGT_ERR_CONFIG: return "config";
    case PGT_ERR_SHAPE: return "shape";
    case PGT_ERR_INDEX: return "index";
    case PGT_ERR_LENGTH: return "length";
    case PGT_ERR_STATE: return "state";
    case PGT_ERR_CONTRACT: return "contract";
    case PGT_ERR_IO: return "io";
    case PGT_ERR_FORMAT: return "format";
    case PGT_ERR_FREEZE: return "freeze_violation";
    case PGT_ERR_DIVERGED: return "diverged";
    case PGT_ERR_ORACLE: return "oracle";
    case PGT_ERR_INVALID: return "invalid_argument";
    case PGT_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* pgt_last_error(void) { return g_last_error.c_str(); }

const char* pgt_version(void) { return "0.1.0"; }

void pgt_string_free(char* text) { std::free(text); }

/* -------------------------- config ------------------------------- */

pgt_status pgt_config_load(const char* path, pgt_config** out) {
    if (!path || !out) return invalid("pgt_config_load: null argument");
    return wrap([&] { *out = new pgt_config{load_run_config(path)}; });
}

pgt_status pgt_config_parse(const char* text, pgt_config** out) {
    if (!text || !out) return invalid("pgt_config_parse: null argument");
    return wrap([&] { *out = new pgt_config{parse_run_config(text)}; });
}

pgt_status pgt_config_override(pgt_config* config, const char* key, const char* value) {
    if (!config || !key || !value) return invalid("pgt_config_override: null argument");
    return wrap([&] { override_run_config(config->config, key, value); });
}

pgt_status pgt_config_render(const pgt_config* config, char** out_text) {
    if (!config || !out_text) return invalid("pgt_config_render: null argument");
    return wrap([&] { *out_text = dup_string(serialize_run_config(config->config)); });
}

pgt_status pgt_config_validate(const pgt_config* config) {
    if (!config) return invalid("pgt_config_validate: null argument");
    return wrap([&] { config->config.validate(); });
}

void pgt_config_free(pgt_config* config) { delete config; }

/* --------------------------- count ------------------------------- */

void pgt_count_spec_init(pgt_count_spec* spec) {
    if (!spec) return;
    spec->arch = "bert-base";
    spec->blocks = 0;
    spec->hidden = 0;
    spec->heads = 0;
    spec->ffn = 0;
    spec->vocab = 0;
    spec->max_positions = 0;
    spec->type_vocab = 0;
    spec->head = "classifier";
    spec->include_pooler = -1;
    spec->num_classes = 2;
    spec->epochs = 3;
    spec->mode = "ft";
    spec->variant = "standard";
    spec->peft = "full";
    spec->adapter_bottleneck = 64;
    spec->lora_rank = 8;
    spec->lora_alpha = 16.0;
    spec->lora_targets = "wq,wv";
}

pgt_status pgt_count(const pgt_count_spec* spec, pgt_ledger** out) {
    if (!spec || !out) return invalid("pgt_count: null argument");
    return wrap([&] {
        CountRequest request;
        request.arch = spec->arch ? spec->arch : "bert-base";
        if (request.arch == "custom") {
            request.dims.num_blocks = spec->blocks;
            request.dims.hidden = spec->hidden;
            request.dims.num_heads = spec->heads;
            request.dims.ffn_dim = spec->ffn;
            request.dims.vocab = spec->vocab;
            request.dims.max_positions = spec->max_positions;
            request.dims.type_vocab = spec->type_vocab;
            request.dims_given = spec->blocks > 0 && spec->hidden > 0 && spec->heads > 0 &&
                                 spec->ffn > 0 && spec->vocab > 0 && spec->max_positions > 0;
        }
        request.head_kind = head_kind_from_name(spec->head ? spec->head : "classifier");
        request.include_pooler = spec->include_pooler;
        request.num_classes = spec->num_classes;
        request.epochs = spec->epochs;
        request.mode = run_mode_from_name(spec->mode ? spec->mode : "ft");
        request.variant = variant_from_name(spec->variant ? spec->variant : "standard");
        request.peft.kind = peft_kind_from_name(spec->peft ? spec->peft : "full");
        request.peft.adapter_bottleneck = spec->adapter_bottleneck;
        request.peft.lora_rank = spec->lora_rank;
        request.peft.lora_alpha = spec->lora_alpha;
        if (spec->lora_targets) request.peft.lora_targets = split_targets(spec->lora_targets);
        *out = new pgt_ledger{static_count(request)};
    });
}

int64_t pgt_ledger_epochs(const pgt_ledger* ledger) {
    return ledger ? static_cast<int64_t>(ledger->outcome.ledger.per_epoch.size()) : -1;
}

int64_t pgt_ledger_epoch_updated(const pgt_ledger* ledger, int64_t epoch) {
    if (!ledger || epoch < 1 ||
        epoch > static_cast<int64_t>(ledger->outcome.ledger.per_epoch.size())) {
        return -1;
    }
    return ledger->outcome.ledger.per_epoch[static_cast<size_t>(epoch - 1)];
}

int64_t pgt_ledger_cumulative(const pgt_ledger* ledger) {
    return ledger ? ledger->outcome.ledger.cumulative : -1;
}

double pgt_ledger_reduction(const pgt_ledger* ledger) {
    return ledger ? ledger->outcome.reduction : -1.0;
}

int64_t pgt_ledger_total_params(const pgt_ledger* ledger) {
    return ledger ? ledger->outcome.total_params : -1;
}

int64_t pgt_ledger_trainable_params(const pgt_ledger* ledger) {
    return ledger ? ledger->outcome.trainable_params : -1;
}

pgt_status pgt_ledger_render(const pgt_ledger* ledger, const char* format, char** out_text) {
    if (!ledger || !format || !out_text) return invalid("pgt_ledger_render: null argument");
    return wrap([&] {
        *out_text =
            dup_string(ledger_to_string(ledger->outcome.ledger, ledger->outcome.reduction, format));
    });
}

pgt_status pgt_ledger_export(const pgt_ledger* ledger, const char* path, const char* format) {
    if (!ledger || !path || !format) return invalid("pgt_ledger_export: null argument");
    return wrap(
        [&] { export_ledger(ledger->outcome.ledger, ledger->outcome.reduction, path, format); });
}

void pgt_ledger_free(pgt_ledger* ledger) { delete ledger; }

/* ------------------------- experiments --------------------------- */

pgt_status pgt_train(const pgt_config* config, pgt_run** out) {
    if (!config || !out) return invalid("pgt_train: null argument");
    return wrap([&] { *out = new pgt_run{run_train(config->config)}; });
}

pgt_status pgt_probe(const pgt_config* config, pgt_run** out) {
    if (!config || !out) return invalid("pgt_probe: null argument");
    return wrap([&] { *out = new pgt_run{run_probe(config->config)}; });
}

pgt_status pgt_ablate(const pgt_config* config, pgt_run** out) {
    if (!config || !out) return invalid("pgt_ablate: null argument");
    return wrap([&] { *out = new pgt_run{run_ablate(config->config)}; });
}

pgt_status pgt_run_summary(const pgt_run* run, char** out_text) {
    if (!run || !out_text) return invalid("pgt_run_summary: null argument");
    return wrap([&] { *out_text = dup_string(outcome_summary(run->outcome)); });
}

pgt_status pgt_run_write_artifacts(const pgt_run* run, const char* dir, char** out_listing) {
    if (!run || !dir) return invalid("pgt_run_write_artifacts: null argument");
    return wrap([&] {
        const auto files = write_artifacts(run->outcome, dir);
        if (out_listing) {
            std::string joined;
            for (const auto& f : files) {
                joined += f;
                joined += '\n';
            }
            *out_listing = dup_string(joined);
        }
    });
}

int64_t pgt_run_epochs(const pgt_run* run) {
    if (!run || run->outcome.results.empty()) return -1;
    return static_cast<int64_t>(run->outcome.results.front().metrics.loss_mean.size());
}

pgt_status pgt_run_metric(const pgt_run* run, const char* name, int64_t epoch, double* out) {
    if (!run || !name || !out) return invalid("pgt_run_metric: null argument");
    return wrap([&] {
        const std::string metric = name;
        if (metric == "probe_acc") {
            if (epoch < 1 || epoch > static_cast<int64_t>(run->outcome.probe_accuracy.size())) {
                fail(Errc::contract, "probe_acc: block index out of range");
            }
            *out = run->outcome.probe_accuracy[static_cast<size_t>(epoch - 1)];
            return;
        }
        if (run->outcome.results.empty()) fail(Errc::state, "run has no training results");
        const MetricsRecord& m = run->outcome.results.front().metrics;
        const std::vector<double>* series = nullptr;
        if (metric == "loss") series = &m.loss_mean;
        else if (metric == "train_acc") series = &m.train_accuracy;
        else if (metric == "eval_acc") series = &m.eval_accuracy;
        else if (metric == "lr_start") series = &m.lr_start;
        else fail(Errc::invalid_argument, "unknown metric '" + metric + "'");
        if (epoch < 1 || epoch > static_cast<int64_t>(series->size())) {
            fail(Errc::contract, "metric epoch out of range");
        }
        *out = (*series)[static_cast<size_t>(epoch - 1)];
    });
}

pgt_status pgt_run_updated_params(const pgt_run* run, int64_t epoch, int64_t* out) {
    if (!run || !out) return invalid("pgt_run_updated_params: null argument");
    return wrap([&] {
        if (run->outcome.results.empty()) fail(Errc::state, "run has no training results");
        const auto& per_epoch = run->outcome.results.front().ledger.per_epoch;
        if (epoch < 1 || epoch > static_cast<int64_t>(per_epoch.size())) {
            fail(Errc::contract, "ledger epoch out of range");
        }
        *out = per_epoch[static_cast<size_t>(epoch - 1)];
    });
}

void pgt_run_free(pgt_run* run) { delete run; }

pgt_status pgt_export_run(const char* run_json_path, const char* out_path, const char* format,
                          char** out_listing) {
    if (!run_json_path || !out_path || !format) return invalid("pgt_export_run: null argument");
    return wrap([&] {
        const auto files = export_run(run_json_path, out_path, format);
        if (out_listing) {
            std::string joined;
            for (const auto& f : files) {
                joined += f;
                joined += '\n';
            }
            *out_listing = dup_string(joined);
        }
    });
}

/* ------------------------- models -------------------------------- */

pgt_status pgt_model_build(const pgt_config* config, pgt_model** out) {
    if (!config || !out) return invalid("pgt_model_build: null argument");
    return wrap([&] { *out = new pgt_model{prepare_model(config->config)}; });
}

pgt_status pgt_model_param_total(const pgt_model* model, int64_t* out) {
    if (!model || !out) return invalid("pgt_model_param_total: null argument");
    *out = model->model.registry.total_elements();
    return PGT_OK;
}

pgt_status pgt_model_save(const pgt_model* model, const char* path) {
    if (!model || !path) return invalid("pgt_model_save: null argument");
    return wrap([&] { save_checkpoint(model->model, path); });
}

pgt_status pgt_model_load(pgt_model* model, const char* path) {
    if (!model || !path) return invalid("pgt_model_load: null argument");
    return wrap([&] { load_checkpoint(path, model->model); });
}

pgt_status pgt_model_logits(const pgt_model* model, const int64_t* ids, int64_t batch,
                            int64_t seq_len, double* out, int64_t out_len) {
    if (!model || !ids || !out) return invalid("pgt_model_logits: null argument");
    return wrap([&] {
        if (batch < 1 || seq_len < 1) fail(Errc::shape, "batch and seq_len must be >= 1");
        const std::vector<int64_t> id_vec(ids, ids + batch * seq_len);
        std::vector<uint8_t> mask(id_vec.size());
        for (size_t i = 0; i < id_vec.size(); ++i) mask[i] = id_vec[i] != 0;
        Tape tape(false);
        const TensorPtr logits =
            model->model.forward(tape, id_vec, batch, seq_len, mask);
        if (logits->size() != out_len) {
            fail(Errc::shape, "output buffer holds " + std::to_string(out_len) +
                                  " doubles, logits need " + std::to_string(logits->size()));
        }
        std::memcpy(out, logits->data.data(), logits->data.size() * sizeof(double));
    });
}

void pgt_model_free(pgt_model* model) { delete model; }

}  // extern "C"
