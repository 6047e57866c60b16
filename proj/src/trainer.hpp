#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "model.hpp"
#include "schedule.hpp"
#include "tasks.hpp"

namespace progtune {

enum class OptimizerKind { adamw, sgd };

const char* optimizer_kind_name(OptimizerKind k);
OptimizerKind optimizer_kind_from_name(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double momentum = 0.0;  // sgd only
};

struct TrainConfig {
    int64_t epochs = 3;
    int64_t batch_size = 16;
    double base_lr = 5e-3;
    uint64_t seed = 1;
    RunMode mode = RunMode::progtune;
    ScheduleVariant variant = ScheduleVariant::standard;
    bool embeddings_always = true;
    PeftConfig peft;
    OptimizerConfig optimizer;

    void validate() const;
};

struct MetricsRecord {
    // one entry per epoch
    std::vector<double> loss_mean;
    std::vector<double> train_accuracy;
    std::vector<double> eval_accuracy;
    std::vector<double> lr_start;
    std::vector<double> epoch_seconds;  // never exported, stdout reporting only
    // one entry per optimizer step plus the terminal zero
    std::vector<double> lr_trace;
};

// Linear decay over the whole run: base_lr * (1 - step/total_steps).
double lr_at(int64_t step, int64_t total_steps, double base_lr);

// AdamW (decoupled weight decay) or SGD with momentum. Moment state is keyed
// by parameter id and persists across epochs; parameters that leave the
// trainable set keep stale state.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    // Updates exactly the entries flagged trainable. A gradient on any frozen
    // entry is a freeze violation and fails hard.
    void step(const ParameterRegistry& registry, const std::vector<char>& trainable, double lr);

private:
    struct State {
        std::vector<double> m, v;
        int64_t t = 0;
    };
    OptimizerConfig config_;
    std::unordered_map<std::string, State> state_;
};

struct TrainResult {
    MetricsRecord metrics;
    UpdateLedger ledger;     // instrumented from freeze verification
    UpdateLedger predicted;  // count_updated_params on the same schedule
};

// One full run of the schedule over the task: per-epoch freeze/unfreeze,
// one pass over the training split per epoch, evaluation, and
// frozen-parameter bit-equality checks at every epoch boundary. The PEFT
// regime in config must already be applied to the model.
TrainResult train_run(Model& model, const StageSchedule& schedule, const TaskData& task,
                      const TrainConfig& config);

// Trains the given model with only Embedding + Block(i) + Head trainable for
// every epoch (block_index is 1-based).
TrainResult block_probe_run(Model& model, const TaskData& task, int64_t block_index,
                            const TrainConfig& config);

// block_probe_run on a fresh model; returns final eval accuracy.
double block_probe(const ModelConfig& model_config, const TaskData& task, int64_t block_index,
                   const TrainConfig& config);

// block_probe for i = 1..L.
std::vector<double> block_probe_all(const ModelConfig& model_config, const TaskData& task,
                                    const TrainConfig& config);

// Classification accuracy over the split (deterministic, order-invariant).
double evaluate(const Model& model, const std::vector<Example>& split, int64_t pad_to);

// Span exact match for qa_span heads.
struct SpanExample {
    std::vector<int64_t> tokens;
    int64_t start = 0;
    int64_t end = 0;
};
double evaluate_spans(const Model& model, const std::vector<SpanExample>& split, int64_t pad_to);

}  // namespace progtune
