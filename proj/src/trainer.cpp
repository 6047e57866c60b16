#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "rng.hpp"

namespace progtune {

const char* optimizer_kind_name(OptimizerKind k) {
    return k == OptimizerKind::adamw ? "adamw" : "sgd";
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
    if (name == "adamw") return OptimizerKind::adamw;
    if (name == "sgd") return OptimizerKind::sgd;
    fail(Errc::config, "unknown optimizer '" + name + "' (expected adamw|sgd)");
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(Errc::config, "train: epochs must be >= 1");
    if (batch_size < 1) fail(Errc::config, "train: batch_size must be >= 1");
    if (!(base_lr > 0.0)) fail(Errc::config, "train: base_lr must be > 0");
    peft.validate();
}

double lr_at(int64_t step, int64_t total_steps, double base_lr) {
    if (total_steps < 1) fail(Errc::contract, "lr_at: total_steps must be >= 1");
    if (step < 0 || step > total_steps) {
        fail(Errc::contract, "lr_at: step " + std::to_string(step) + " outside [0, " +
                                 std::to_string(total_steps) + "]");
    }
    return base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

void Optimizer::step(const ParameterRegistry& registry, const std::vector<char>& trainable,
                     double lr) {
    const auto& entries = registry.entries();
    if (trainable.size() != entries.size()) {
        fail(Errc::contract, "optimizer: trainable flags do not match registry size");
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& t = entries[i].tensor;
        if (trainable[i]) continue;
        if (!t->has_grad()) continue;
        for (double g : t->grad) {
            if (g != 0.0) {
                fail(Errc::freeze_violation,
                     "gradient present for frozen parameter '" + entries[i].id + "'");
            }
        }
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!trainable[i]) continue;
        const auto& tensor = entries[i].tensor;
        tensor->ensure_grad();
        State& st = state_[entries[i].id];
        if (st.m.empty() && config_.kind == OptimizerKind::adamw) {
            st.m.assign(tensor->data.size(), 0.0);
            st.v.assign(tensor->data.size(), 0.0);
        }
        if (st.m.empty() && config_.kind == OptimizerKind::sgd) {
            st.m.assign(tensor->data.size(), 0.0);
        }
        st.t += 1;
        if (config_.kind == OptimizerKind::adamw) {
            const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(st.t));
            for (size_t j = 0; j < tensor->data.size(); ++j) {
                const double g = tensor->grad[j];
                st.m[j] = config_.beta1 * st.m[j] + (1.0 - config_.beta1) * g;
                st.v[j] = config_.beta2 * st.v[j] + (1.0 - config_.beta2) * g * g;
                const double mhat = st.m[j] / bc1;
                const double vhat = st.v[j] / bc2;
                tensor->data[j] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                                         config_.weight_decay * tensor->data[j]);
            }
        } else {
            for (size_t j = 0; j < tensor->data.size(); ++j) {
                st.m[j] = config_.momentum * st.m[j] + tensor->grad[j];
                tensor->data[j] -= lr * st.m[j];
            }
        }
    }
}

namespace {

constexpr int64_t kEvalBatch = 32;

std::vector<int64_t> argmax_labels(const TensorPtr& logits) {
    const int64_t b = logits->shape[0], k = logits->shape[1];
    std::vector<int64_t> out(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j) {
            if (logits->data[i * k + j] > logits->data[i * k + best]) best = j;
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

// Shared core of train_run and block_probe: the provider yields the epoch's
// trainable table indices.
TrainResult run_loop(Model& model, const std::function<std::vector<size_t>(int64_t)>& provider,
                     const TaskData& task, const TrainConfig& config) {
    config.validate();
    const auto& entries = model.registry.entries();
    const int64_t pad_to = task.spec.seq_len;
    const int64_t n = static_cast<int64_t>(task.train.size());
    const int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const int64_t total_steps = steps_per_epoch * config.epochs;

    Optimizer optimizer(config.optimizer);
    TrainResult result;
    result.metrics.lr_trace.reserve(static_cast<size_t>(total_steps) + 1);
    int64_t global_step = 0;

    for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const std::vector<size_t> tset = provider(epoch);
        std::vector<char> trainable(entries.size(), 0);
        for (size_t idx : tset) trainable[idx] = 1;

        // Frozen parameters leave the backward graph entirely for the epoch.
        std::vector<std::vector<double>> frozen_snapshot(entries.size());
        for (size_t i = 0; i < entries.size(); ++i) {
            entries[i].tensor->requires_grad = trainable[i] != 0;
            if (!trainable[i]) frozen_snapshot[i] = entries[i].tensor->data;
        }

        std::vector<size_t> order(static_cast<size_t>(n));
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix_seed(config.seed, 0xe90c + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        result.metrics.lr_start.push_back(lr_at(global_step, total_steps, config.base_lr));
        for (int64_t b0 = 0; b0 < n; b0 += config.batch_size) {
            const int64_t bsz = std::min<int64_t>(config.batch_size, n - b0);
            std::vector<std::vector<int64_t>> seqs;
            std::vector<int64_t> labels;
            seqs.reserve(static_cast<size_t>(bsz));
            for (int64_t i = 0; i < bsz; ++i) {
                const Example& ex = task.train[order[static_cast<size_t>(b0 + i)]];
                seqs.push_back(ex.tokens);
                labels.push_back(ex.label);
            }
            const Batch batch = tokenize_batch(seqs, pad_to);

            Tape tape;
            TensorPtr logits = model.forward(tape, batch.ids, batch.rows, batch.cols, batch.mask);
            TensorPtr loss = tape.softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss->data[0])) {
                fail(Errc::diverged, "loss diverged at step " + std::to_string(global_step));
            }
            loss_sum += loss->data[0];
            tape.backward(loss);

            const double lr = lr_at(global_step, total_steps, config.base_lr);
            result.metrics.lr_trace.push_back(lr);
            optimizer.step(model.registry, trainable, lr);
            model.zero_grads();
            ++global_step;
        }

        // Bit-equality check over everything outside the trainable set; the
        // instrumented ledger counts what the check could not rule out.
        int64_t may_change = 0;
        std::vector<std::pair<std::string, int64_t>> rows;
        static const TagKind kClassOrder[] = {TagKind::embedding, TagKind::block, TagKind::head,
                                              TagKind::adapter,   TagKind::bias,  TagKind::lora};
        std::vector<int64_t> per_class(6, 0);
        for (size_t i = 0; i < entries.size(); ++i) {
            if (!trainable[i]) {
                const auto& now = entries[i].tensor->data;
                const auto& before = frozen_snapshot[i];
                if (now.size() != before.size() ||
                    std::memcmp(now.data(), before.data(), now.size() * sizeof(double)) != 0) {
                    fail(Errc::freeze_violation, "frozen parameter '" + entries[i].id +
                                                     "' changed during epoch " +
                                                     std::to_string(epoch));
                }
                continue;
            }
            may_change += entries[i].tensor->size();
            for (size_t c = 0; c < 6; ++c) {
                if (entries[i].tag.kind == kClassOrder[c]) per_class[c] += entries[i].tensor->size();
            }
        }
        for (size_t c = 0; c < 6; ++c) {
            if (per_class[c] > 0) rows.emplace_back(tag_class_name(kClassOrder[c]), per_class[c]);
        }
        result.ledger.per_epoch.push_back(may_change);
        result.ledger.cumulative += may_change;
        result.ledger.breakdown.push_back(std::move(rows));

        result.metrics.loss_mean.push_back(loss_sum / static_cast<double>(steps_per_epoch));
        result.metrics.train_accuracy.push_back(evaluate(model, task.train, pad_to));
        result.metrics.eval_accuracy.push_back(evaluate(model, task.eval, pad_to));
        result.metrics.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count());
    }
    result.metrics.lr_trace.push_back(lr_at(total_steps, total_steps, config.base_lr));
    return result;
}

}  // namespace

TrainResult train_run(Model& model, const StageSchedule& schedule, const TaskData& task,
                      const TrainConfig& config) {
    if (schedule.epochs() != config.epochs) {
        fail(Errc::config, "train_run: schedule has " + std::to_string(schedule.epochs()) +
                               " stages but config declares " + std::to_string(config.epochs) +
                               " epochs");
    }
    const ParamTable table = model.table();
    const PeftGroups groups = peft_trainable_set(table, config.peft);
    auto provider = [&](int64_t epoch) { return trainable_set(schedule, epoch, table, groups); };
    TrainResult result = run_loop(model, provider, task, config);
    result.predicted = count_updated_params(schedule, table, config.peft);
    if (result.predicted.per_epoch != result.ledger.per_epoch) {
        fail(Errc::contract, "train_run: instrumented ledger disagrees with schedule prediction");
    }
    return result;
}

TrainResult block_probe_run(Model& model, const TaskData& task, int64_t block_index,
                            const TrainConfig& config) {
    if (block_index < 1 || block_index > model.config.num_blocks) {
        fail(Errc::contract, "block_probe: block index " + std::to_string(block_index) +
                                 " outside [1, " + std::to_string(model.config.num_blocks) + "]");
    }
    const ParamTable table = model.table();
    std::vector<size_t> fixed;
    for (size_t i = 0; i < table.params.size(); ++i) {
        const auto& tag = table.params[i].tag;
        // the head must train for the probe to classify at all
        if (tag.kind == TagKind::embedding || tag.kind == TagKind::head ||
            (tag.kind == TagKind::block && tag.block == block_index)) {
            fixed.push_back(i);
        }
    }
    auto provider = [&](int64_t) { return fixed; };
    TrainConfig probe_config = config;
    probe_config.peft = PeftConfig{};  // the probe fine-tunes raw block weights
    return run_loop(model, provider, task, probe_config);
}

double block_probe(const ModelConfig& model_config, const TaskData& task, int64_t block_index,
                   const TrainConfig& config) {
    Model model = build_model(model_config, config.seed);
    return block_probe_run(model, task, block_index, config).metrics.eval_accuracy.back();
}

std::vector<double> block_probe_all(const ModelConfig& model_config, const TaskData& task,
                                    const TrainConfig& config) {
    std::vector<double> acc;
    acc.reserve(static_cast<size_t>(model_config.num_blocks));
    for (int64_t i = 1; i <= model_config.num_blocks; ++i) {
        acc.push_back(block_probe(model_config, task, i, config));
    }
    return acc;
}

double evaluate(const Model& model, const std::vector<Example>& split, int64_t pad_to) {
    if (split.empty()) fail(Errc::contract, "evaluate: empty split");
    if (model.config.head_kind != HeadKind::classifier) {
        fail(Errc::contract, "evaluate: accuracy needs a classifier head");
    }
    int64_t correct = 0;
    for (size_t b0 = 0; b0 < split.size(); b0 += kEvalBatch) {
        const size_t bsz = std::min<size_t>(kEvalBatch, split.size() - b0);
        std::vector<std::vector<int64_t>> seqs;
        seqs.reserve(bsz);
        for (size_t i = 0; i < bsz; ++i) seqs.push_back(split[b0 + i].tokens);
        const Batch batch = tokenize_batch(seqs, pad_to);
        Tape tape(false);
        TensorPtr logits = model.forward(tape, batch.ids, batch.rows, batch.cols, batch.mask);
        const auto pred = argmax_labels(logits);
        for (size_t i = 0; i < bsz; ++i) {
            if (pred[i] == split[b0 + i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

double evaluate_spans(const Model& model, const std::vector<SpanExample>& split, int64_t pad_to) {
    if (split.empty()) fail(Errc::contract, "evaluate_spans: empty split");
    if (model.config.head_kind != HeadKind::qa_span) {
        fail(Errc::contract, "evaluate_spans: needs a qa_span head");
    }
    int64_t exact = 0;
    for (const auto& ex : split) {
        const Batch batch = tokenize_batch({ex.tokens}, pad_to);
        Tape tape(false);
        TensorPtr logits = model.forward(tape, batch.ids, 1, batch.cols, batch.mask);
        // logits [1, s, 2]; argmax over real positions per channel
        const int64_t real = static_cast<int64_t>(ex.tokens.size());
        int64_t best_start = 0, best_end = 0;
        for (int64_t j = 1; j < real; ++j) {
            if (logits->data[j * 2 + 0] > logits->data[best_start * 2 + 0]) best_start = j;
            if (logits->data[j * 2 + 1] > logits->data[best_end * 2 + 1]) best_end = j;
        }
        if (best_start == ex.start && best_end == ex.end) ++exact;
    }
    return static_cast<double>(exact) / static_cast<double>(split.size());
}

}  // namespace progtune
