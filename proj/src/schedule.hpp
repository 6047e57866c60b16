#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "model.hpp"
#include "peft.hpp"

namespace progtune {

enum class ScheduleVariant { standard, without_low_blocks, from_high_blocks };
enum class RunMode { finetune, progtune };

const char* variant_name(ScheduleVariant v);
ScheduleVariant variant_from_name(const std::string& name);
const char* run_mode_name(RunMode m);
RunMode run_mode_from_name(const std::string& name);

// T disjoint contiguous parts covering blocks 1..L, low to high. Parts
// 1..T-1 hold exactly floor(L/T) blocks; the highest part absorbs the
// remainder, so the blocks that train longest get the extra capacity.
struct PartitionPlan {
    int64_t num_blocks = 0;   // L
    int64_t stage_count = 0;  // T, bound one-to-one to the epoch count
    std::vector<std::pair<int64_t, int64_t>> parts;  // inclusive 1-based [lo, hi]
};

PartitionPlan partition_blocks(int64_t num_blocks, int64_t stage_count);

// Per-epoch stage definitions over a partition. The head belongs to every
// stage; embedding-class parameters train every epoch unless
// embeddings_always is cleared.
struct StageSchedule {
    ScheduleVariant variant = ScheduleVariant::standard;
    RunMode mode = RunMode::progtune;
    PartitionPlan plan;
    std::vector<std::vector<int64_t>> stages;  // per epoch: 1-based part indices
    bool embeddings_always = true;

    int64_t epochs() const { return plan.stage_count; }
    // 1-based block indices covered by the epoch's stage, ascending.
    std::vector<int64_t> stage_blocks(int64_t epoch) const;
};

StageSchedule build_stages(const PartitionPlan& plan, ScheduleVariant variant);
// Plain fine-tuning expressed in the same terms: every part in every epoch.
StageSchedule finetune_stages(const PartitionPlan& plan);

// Parameter indices (into table.params, ascending) trainable in the given
// epoch: the stage's per-block groups, the head, and the embedding-class
// selection.
std::vector<size_t> trainable_set(const StageSchedule& schedule, int64_t epoch,
                                  const ParamTable& table, const PeftGroups& groups);

// Updated-parameter accounting: per-epoch trainable-set cardinality in
// elements, its running sum, and a per-tag-class breakdown.
struct UpdateLedger {
    std::vector<int64_t> per_epoch;
    int64_t cumulative = 0;
    // per epoch: (tag class name, elements), fixed class order, zero rows omitted
    std::vector<std::vector<std::pair<std::string, int64_t>>> breakdown;
};

UpdateLedger count_updated_params(const StageSchedule& schedule, const ParamTable& table,
                                  const PeftConfig& peft);

// 1 - (progressive cumulative / full fine-tuning cumulative) over the same
// epoch count and regime.
double predicted_reduction(const StageSchedule& schedule, const ParamTable& table,
                           const PeftConfig& peft);

}  // namespace progtune
