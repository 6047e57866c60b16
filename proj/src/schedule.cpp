#include "schedule.hpp"

#include <algorithm>

namespace progtune {

const char* variant_name(ScheduleVariant v) {
    switch (v) {
    case ScheduleVariant::standard: return "standard";
    case ScheduleVariant::without_low_blocks: return "without_low_blocks";
    case ScheduleVariant::from_high_blocks: return "from_high_blocks";
    }
    return "unknown";
}

ScheduleVariant variant_from_name(const std::string& name) {
    if (name == "standard") return ScheduleVariant::standard;
    if (name == "wolb" || name == "without_low_blocks") return ScheduleVariant::without_low_blocks;
    if (name == "fromhb" || name == "from_high_blocks") return ScheduleVariant::from_high_blocks;
    fail(Errc::config, "unknown schedule variant '" + name + "' (expected standard|wolb|fromhb)");
}

const char* run_mode_name(RunMode m) { return m == RunMode::finetune ? "ft" : "progtune"; }

RunMode run_mode_from_name(const std::string& name) {
    if (name == "ft" || name == "finetune") return RunMode::finetune;
    if (name == "progtune" || name == "pt") return RunMode::progtune;
    fail(Errc::config, "unknown mode '" + name + "' (expected ft|progtune)");
}

PartitionPlan partition_blocks(int64_t num_blocks, int64_t stage_count) {
    if (stage_count < 1 || stage_count > num_blocks) {
        fail(Errc::config, "partition: stage count " + std::to_string(stage_count) +
                               " must lie in [1, " + std::to_string(num_blocks) + "]");
    }
    PartitionPlan plan;
    plan.num_blocks = num_blocks;
    plan.stage_count = stage_count;
    const int64_t size = num_blocks / stage_count;
    for (int64_t t = 1; t <= stage_count; ++t) {
        const int64_t lo = (t - 1) * size + 1;
        const int64_t hi = (t == stage_count) ? num_blocks : t * size;
        plan.parts.emplace_back(lo, hi);
    }
    return plan;
}

std::vector<int64_t> StageSchedule::stage_blocks(int64_t epoch) const {
    if (epoch < 1 || epoch > epochs()) {
        fail(Errc::contract, "epoch " + std::to_string(epoch) + " outside [1, " +
                                 std::to_string(epochs()) + "]");
    }
    std::vector<int64_t> blocks;
    for (int64_t part : stages[static_cast<size_t>(epoch - 1)]) {
        const auto& [lo, hi] = plan.parts[static_cast<size_t>(part - 1)];
        for (int64_t b = lo; b <= hi; ++b) blocks.push_back(b);
    }
    std::sort(blocks.begin(), blocks.end());
    return blocks;
}

StageSchedule build_stages(const PartitionPlan& plan, ScheduleVariant variant) {
    StageSchedule s;
    s.variant = variant;
    s.mode = RunMode::progtune;
    s.plan = plan;
    const int64_t T = plan.stage_count;
    s.stages.resize(static_cast<size_t>(T));
    for (int64_t t = 1; t <= T; ++t) {
        auto& stage = s.stages[static_cast<size_t>(t - 1)];
        switch (variant) {
        case ScheduleVariant::standard:
            for (int64_t i = t; i <= T; ++i) stage.push_back(i);
            break;
        case ScheduleVariant::without_low_blocks:
            // the lowest part of each stage is dropped; the last stage is head-only
            for (int64_t i = t + 1; i <= T; ++i) stage.push_back(i);
            break;
        case ScheduleVariant::from_high_blocks:
            for (int64_t i = T - t + 1; i <= T; ++i) stage.push_back(i);
            break;
        }
    }
    return s;
}

StageSchedule finetune_stages(const PartitionPlan& plan) {
    StageSchedule s;
    s.variant = ScheduleVariant::standard;
    s.mode = RunMode::finetune;
    s.plan = plan;
    s.stages.assign(static_cast<size_t>(plan.stage_count), {});
    for (auto& stage : s.stages) {
        for (int64_t i = 1; i <= plan.stage_count; ++i) stage.push_back(i);
    }
    return s;
}

std::vector<size_t> trainable_set(const StageSchedule& schedule, int64_t epoch,
                                  const ParamTable& table, const PeftGroups& groups) {
    if (static_cast<int64_t>(groups.per_block.size()) != table.num_blocks) {
        fail(Errc::contract, "trainable_set: groups do not match the parameter table");
    }
    std::vector<char> in_set(table.params.size(), 0);
    for (int64_t b : schedule.stage_blocks(epoch)) {
        for (size_t idx : groups.per_block[static_cast<size_t>(b - 1)]) in_set[idx] = 1;
    }
    for (size_t idx : groups.head_part) in_set[idx] = 1;
    if (schedule.embeddings_always) {
        for (size_t idx : groups.embedding_part) in_set[idx] = 1;
    }
    std::vector<size_t> out;
    for (size_t i = 0; i < in_set.size(); ++i) {
        if (in_set[i]) out.push_back(i);
    }
    return out;
}

UpdateLedger count_updated_params(const StageSchedule& schedule, const ParamTable& table,
                                  const PeftConfig& peft) {
    const PeftGroups groups = peft_trainable_set(table, peft);
    static const TagKind kClassOrder[] = {TagKind::embedding, TagKind::block, TagKind::head,
                                          TagKind::adapter,   TagKind::bias,  TagKind::lora};
    UpdateLedger ledger;
    for (int64_t t = 1; t <= schedule.epochs(); ++t) {
        const auto set = trainable_set(schedule, t, table, groups);
        int64_t total = 0;
        std::vector<std::pair<std::string, int64_t>> rows;
        for (TagKind cls : kClassOrder) {
            int64_t n = 0;
            for (size_t idx : set) {
                if (table.params[idx].tag.kind == cls) n += table.params[idx].elements;
            }
            if (n > 0) rows.emplace_back(tag_class_name(cls), n);
            total += n;
        }
        ledger.per_epoch.push_back(total);
        ledger.cumulative += total;
        ledger.breakdown.push_back(std::move(rows));
    }
    return ledger;
}

double predicted_reduction(const StageSchedule& schedule, const ParamTable& table,
                           const PeftConfig& peft) {
    const UpdateLedger pt = count_updated_params(schedule, table, peft);
    const UpdateLedger ft = count_updated_params(finetune_stages(schedule.plan), table, peft);
    if (ft.cumulative == 0) return 0.0;
    return 1.0 - static_cast<double>(pt.cumulative) / static_cast<double>(ft.cumulative);
}

}  // namespace progtune
