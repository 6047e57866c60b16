#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "metrics_io.hpp"
#include "run_config.hpp"

namespace progtune {

// Static updated-parameter accounting without instantiating any weights.
struct CountRequest {
    std::string arch = "bert-base";  // bert-base | bert-large | custom
    StaticArch dims;                 // consulted when arch == custom
    bool dims_given = false;
    HeadKind head_kind = HeadKind::classifier;
    int include_pooler = -1;  // -1 auto, 0 off, 1 on
    int64_t num_classes = 2;
    int64_t epochs = 3;
    RunMode mode = RunMode::finetune;
    ScheduleVariant variant = ScheduleVariant::standard;
    PeftConfig peft;
};

struct CountOutcome {
    StaticArch arch;
    UpdateLedger ledger;
    double reduction = 0.0;       // vs full fine-tuning over the same epochs
    int64_t total_params = 0;     // every parameter in the table
    int64_t trainable_params = 0; // the active regime's per-epoch trainable set
};

CountOutcome static_count(const CountRequest& request);

// A completed experiment plus everything needed to re-render it.
struct RunOutcome {
    std::string kind;  // train | probe | ablate
    RunConfig config;
    std::vector<std::string> run_names;
    std::vector<TrainResult> results;
    std::vector<double> reductions;
    std::vector<double> probe_accuracy;     // probe only
    std::vector<uint8_t> checkpoint_bytes;  // train only
    nlohmann::ordered_json document;        // persisted as run.json
};

// Model construction per config: build + apply the configured PEFT regime.
Model prepare_model(const RunConfig& config);
StageSchedule make_schedule(const RunConfig& config);

RunOutcome run_train(const RunConfig& config);
RunOutcome run_probe(const RunConfig& config);
// Standard, without-low-blocks and from-high-blocks on identical data/seed,
// with a comparison table over accuracy and updated parameters.
RunOutcome run_ablate(const RunConfig& config);

std::string outcome_summary(const RunOutcome& outcome);
// Writes run.json, metric exports, the ablate comparison / probe table, and
// the final checkpoint into dir. Payloads carry no timestamps: identical
// config + seed give byte-identical files.
std::vector<std::string> write_artifacts(const RunOutcome& outcome, const std::string& dir);

// Re-renders a saved run.json into csv or jsonl next to out_path.
std::vector<std::string> export_run(const std::string& run_json_path, const std::string& out_path,
                                    const std::string& format);

}  // namespace progtune
