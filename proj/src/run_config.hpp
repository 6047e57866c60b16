#pragma once

#include <string>

#include "model.hpp"
#include "tasks.hpp"
#include "trainer.hpp"

namespace progtune {

// One file fully determines a run. Flat key/value with [section] headers;
// parse -> serialize -> parse is the identity.
struct RunConfig {
    ModelConfig model;
    TaskSpec task;
    TrainConfig train;
    int64_t stages = 0;  // [schedule] stages; 0 means "same as train.epochs"
    std::string output_dir = "runs/out";
    std::string output_format = "csv";  // csv | jsonl

    // Cross-field checks: vocab/class agreement, schedule arity vs epochs,
    // partition feasibility, PEFT dims. Throws Errc::config.
    void validate() const;

    int64_t effective_stages() const { return stages > 0 ? stages : train.epochs; }
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& config);

// "section.key" assignment, e.g. override_run_config(c, "schedule.variant", "wolb").
void override_run_config(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace progtune
