#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "schedule.hpp"

using namespace progtune;

namespace {

// Literal enumeration of the partition and the three stage formulas,
// independent of the implementation: parts P_1..P_T of floor(L/T) blocks
// (remainder on the highest part), stage t =
//   standard:  P_t .. P_T
//   w/o LB:    P_{t+1} .. P_T
//   from HB:   P_{T-t+1} .. P_T
std::set<int64_t> oracle_stage_blocks(int64_t L, int64_t T, int64_t t, ScheduleVariant v) {
    const int64_t size = L / T;
    auto part_blocks = [&](int64_t p) {
        std::set<int64_t> out;
        const int64_t lo = (p - 1) * size + 1;
        const int64_t hi = p == T ? L : p * size;
        for (int64_t b = lo; b <= hi; ++b) out.insert(b);
        return out;
    };
    int64_t first = 0, last = T;
    switch (v) {
    case ScheduleVariant::standard: first = t; break;
    case ScheduleVariant::without_low_blocks: first = t + 1; break;
    case ScheduleVariant::from_high_blocks: first = T - t + 1; break;
    }
    std::set<int64_t> blocks;
    for (int64_t p = first; p <= last; ++p) {
        auto pb = part_blocks(p);
        blocks.insert(pb.begin(), pb.end());
    }
    return blocks;
}

ParamTable tiny_table(const PeftConfig& peft = PeftConfig{}) {
    ModelConfig c;
    c.num_blocks = 12;
    c.hidden = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.vocab = 11;
    c.max_positions = 16;
    StaticArch a;
    a.num_blocks = c.num_blocks;
    a.hidden = c.hidden;
    a.num_heads = c.num_heads;
    a.ffn_dim = c.ffn_dim;
    a.vocab = c.vocab;
    a.max_positions = c.max_positions;
    a.type_vocab = 0;
    a.num_classes = c.num_classes;
    a.include_pooler = 0;
    return static_param_count(a, peft);
}

}  // namespace

TEST_CASE("partition_blocks follows the floor rule with high-part remainder") {
    auto plan = partition_blocks(12, 3);
    CHECK(plan.parts == std::vector<std::pair<int64_t, int64_t>>{{1, 4}, {5, 8}, {9, 12}});
    plan = partition_blocks(24, 3);
    CHECK(plan.parts == std::vector<std::pair<int64_t, int64_t>>{{1, 8}, {9, 16}, {17, 24}});
    plan = partition_blocks(14, 4);
    CHECK(plan.parts ==
          std::vector<std::pair<int64_t, int64_t>>{{1, 3}, {4, 6}, {7, 9}, {10, 14}});

    CHECK_THROWS_AS(partition_blocks(4, 5), Error);
    CHECK_THROWS_AS(partition_blocks(4, 0), Error);
}

TEST_CASE("build_stages matches the stage formulas at T=3") {
    auto plan = partition_blocks(12, 3);
    auto std3 = build_stages(plan, ScheduleVariant::standard);
    CHECK(std3.stages == std::vector<std::vector<int64_t>>{{1, 2, 3}, {2, 3}, {3}});

    auto wolb = build_stages(plan, ScheduleVariant::without_low_blocks);
    CHECK(wolb.stages == std::vector<std::vector<int64_t>>{{2, 3}, {3}, {}});  // head only last

    auto fromhb = build_stages(plan, ScheduleVariant::from_high_blocks);
    CHECK(fromhb.stages == std::vector<std::vector<int64_t>>{{3}, {2, 3}, {1, 2, 3}});

    CHECK(std3.embeddings_always);
}

TEST_CASE("stage sets match the literal enumeration oracle over L=2..8") {
    for (int64_t L = 2; L <= 8; ++L) {
        for (int64_t T = 1; T <= L; ++T) {
            const auto plan = partition_blocks(L, T);
            for (ScheduleVariant v : {ScheduleVariant::standard,
                                      ScheduleVariant::without_low_blocks,
                                      ScheduleVariant::from_high_blocks}) {
                const auto schedule = build_stages(plan, v);
                for (int64_t t = 1; t <= T; ++t) {
                    const auto got = schedule.stage_blocks(t);
                    const std::set<int64_t> got_set(got.begin(), got.end());
                    CHECK(got_set == oracle_stage_blocks(L, T, t, v));
                }
            }
        }
    }
}

TEST_CASE("coverage and monotonicity invariants") {
    for (int64_t L = 2; L <= 8; ++L) {
        for (int64_t T = 1; T <= L; ++T) {
            const auto plan = partition_blocks(L, T);

            auto std_s = build_stages(plan, ScheduleVariant::standard);
            std::set<int64_t> seen;
            for (int64_t t = 1; t <= T; ++t) {
                auto blocks = std_s.stage_blocks(t);
                seen.insert(blocks.begin(), blocks.end());
                if (t > 1 && T > 1) {
                    CHECK(std_s.stages[static_cast<size_t>(t - 1)].size() <
                          std_s.stages[static_cast<size_t>(t - 2)].size());
                    // shrinking stages nest
                    auto prev = std_s.stage_blocks(t - 1);
                    for (int64_t b : blocks) {
                        CHECK(std::find(prev.begin(), prev.end(), b) != prev.end());
                    }
                }
            }
            CHECK(seen.size() == static_cast<size_t>(L));  // every block trained at least once

            auto grow = build_stages(plan, ScheduleVariant::from_high_blocks);
            CHECK(grow.stage_blocks(T).size() == static_cast<size_t>(L));
            for (int64_t t = 2; t <= T; ++t) {
                CHECK(grow.stages[static_cast<size_t>(t - 1)].size() >=
                      grow.stages[static_cast<size_t>(t - 2)].size());
            }

            // w/o LB: the union of stages plus the excluded first part is everything
            auto wolb = build_stages(plan, ScheduleVariant::without_low_blocks);
            std::set<int64_t> wolb_seen;
            for (int64_t t = 1; t <= T; ++t) {
                auto blocks = wolb.stage_blocks(t);
                wolb_seen.insert(blocks.begin(), blocks.end());
            }
            for (int64_t b = plan.parts[0].first; b <= plan.parts[0].second; ++b) {
                CHECK(wolb_seen.count(b) == 0);
                wolb_seen.insert(b);
            }
            CHECK(wolb_seen.size() == static_cast<size_t>(L));
        }
    }
}

TEST_CASE("trainable_set resolves epochs against tags") {
    const ParamTable table = tiny_table();
    const PeftGroups groups = peft_trainable_set(table, PeftConfig{});
    const auto schedule = build_stages(partition_blocks(12, 3), ScheduleVariant::standard);

    SUBCASE("epoch 1 under full fine-tuning covers every parameter") {
        const auto set = trainable_set(schedule, 1, table, groups);
        CHECK(set.size() == table.params.size());
    }
    SUBCASE("epoch 3 is embeddings + blocks 9..12 + head") {
        const auto set = trainable_set(schedule, 3, table, groups);
        std::set<size_t> got(set.begin(), set.end());
        for (size_t i = 0; i < table.params.size(); ++i) {
            const auto& tag = table.params[i].tag;
            const bool expect = tag.kind == TagKind::embedding || tag.kind == TagKind::head ||
                                (tag.kind == TagKind::block && tag.block >= 9);
            CHECK(got.count(i) == static_cast<size_t>(expect));
        }
    }
    SUBCASE("epoch out of range is a contract error") {
        CHECK_THROWS_AS(trainable_set(schedule, 4, table, groups), Error);
        CHECK_THROWS_AS(trainable_set(schedule, 0, table, groups), Error);
    }
    SUBCASE("lora epoch 2 selects factors of blocks 5..12 plus head") {
        PeftConfig lora;
        lora.kind = PeftKind::lora;
        lora.lora_rank = 2;
        lora.lora_targets = {"wq", "wv"};
        const ParamTable lt = tiny_table(lora);
        const PeftGroups lg = peft_trainable_set(lt, lora);
        const auto set = trainable_set(schedule, 2, lt, lg);
        std::set<size_t> got(set.begin(), set.end());
        for (size_t i = 0; i < lt.params.size(); ++i) {
            const auto& tag = lt.params[i].tag;
            const bool expect = tag.kind == TagKind::head ||
                                (tag.kind == TagKind::lora && tag.block >= 5);
            CHECK(got.count(i) == static_cast<size_t>(expect));
        }
    }
}

TEST_CASE("ledger reproduces the published updated-parameter sums") {
    PeftConfig full;
    SUBCASE("bert-base, 3-epoch full fine-tuning: 330M within 2%") {
        StaticArch a = named_arch("bert-base");
        const ParamTable t = static_param_count(a, full);
        const auto ft = finetune_stages(partition_blocks(12, 3));
        const UpdateLedger ledger = count_updated_params(ft, t, full);
        CHECK(std::fabs(ledger.cumulative - 330e6) / 330e6 < 0.02);
        CHECK(ledger.per_epoch == std::vector<int64_t>(3, t.total_elements()));
    }
    SUBCASE("bert-base qa: 326.7M ft and 241.6M progressive, within 2%") {
        StaticArch a = named_arch("bert-base");
        a.head_kind = HeadKind::qa_span;
        const ParamTable t = static_param_count(a, full);
        const auto plan = partition_blocks(12, 3);
        const UpdateLedger ft = count_updated_params(finetune_stages(plan), t, full);
        const UpdateLedger pt =
            count_updated_params(build_stages(plan, ScheduleVariant::standard), t, full);
        CHECK(std::fabs(ft.cumulative - 326.7e6) / 326.7e6 < 0.02);
        CHECK(std::fabs(pt.cumulative - 241.6e6) / 241.6e6 < 0.02);
    }
    SUBCASE("bert-large classifier: 1005.4M down to 703.1M, within 2%") {
        StaticArch a = named_arch("bert-large");
        const ParamTable t = static_param_count(a, full);
        const auto plan = partition_blocks(24, 3);
        const UpdateLedger ft = count_updated_params(finetune_stages(plan), t, full);
        const UpdateLedger pt =
            count_updated_params(build_stages(plan, ScheduleVariant::standard), t, full);
        CHECK(std::fabs(ft.cumulative - 1005.4e6) / 1005.4e6 < 0.02);
        CHECK(std::fabs(pt.cumulative - 703.1e6) / 703.1e6 < 0.02);
    }
}

TEST_CASE("ledger structure invariants") {
    const ParamTable table = tiny_table();
    int64_t head_count = 0;
    for (const auto& p : table.params) {
        if (p.tag.kind == TagKind::head) head_count += p.elements;
    }
    for (ScheduleVariant v : {ScheduleVariant::standard, ScheduleVariant::without_low_blocks,
                              ScheduleVariant::from_high_blocks}) {
        const auto schedule = build_stages(partition_blocks(12, 4), v);
        const UpdateLedger ledger = count_updated_params(schedule, table, PeftConfig{});
        int64_t sum = 0;
        for (int64_t e : ledger.per_epoch) {
            sum += e;
            CHECK(e >= head_count);
        }
        CHECK(sum == ledger.cumulative);
        // breakdown rows add up to the epoch totals
        for (size_t t = 0; t < ledger.per_epoch.size(); ++t) {
            int64_t row_sum = 0;
            for (const auto& [cls, n] : ledger.breakdown[t]) row_sum += n;
            CHECK(row_sum == ledger.per_epoch[t]);
        }
    }

    SUBCASE("standard full fine-tuning per-epoch counts strictly decrease") {
        const auto schedule = build_stages(partition_blocks(12, 4), ScheduleVariant::standard);
        const UpdateLedger ledger = count_updated_params(schedule, table, PeftConfig{});
        for (size_t t = 1; t < ledger.per_epoch.size(); ++t) {
            CHECK(ledger.per_epoch[t] < ledger.per_epoch[t - 1]);
        }
    }
}

TEST_CASE("predicted_reduction hits the paper's headline fractions") {
    PeftConfig full;
    SUBCASE("T=1 is a degenerate schedule with zero reduction") {
        const ParamTable t = tiny_table();
        const auto schedule = build_stages(partition_blocks(12, 1), ScheduleVariant::standard);
        CHECK(predicted_reduction(schedule, t, full) == 0.0);
    }
    SUBCASE("bert-base classifier T=3 is approximately 25%") {
        StaticArch a = named_arch("bert-base");
        const ParamTable t = static_param_count(a, full);
        const auto schedule = build_stages(partition_blocks(12, 3), ScheduleVariant::standard);
        const double r = predicted_reduction(schedule, t, full);
        CHECK(r > 0.22);
        CHECK(r < 0.28);
    }
    SUBCASE("block-only toy reduces by exactly one third") {
        ParamTable t;
        t.num_blocks = 12;
        for (int64_t i = 1; i <= 12; ++i) {
            t.params.push_back({"blk" + std::to_string(i), {TagKind::block, i, ""}, 1000, false});
        }
        const auto plan = partition_blocks(12, 3);
        const auto schedule = build_stages(plan, ScheduleVariant::standard);
        const UpdateLedger pt = count_updated_params(schedule, t, PeftConfig{});
        const UpdateLedger ft = count_updated_params(finetune_stages(plan), t, PeftConfig{});
        CHECK(pt.cumulative == 24000);
        CHECK(ft.cumulative == 36000);
        CHECK(predicted_reduction(schedule, t, PeftConfig{}) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
}

TEST_CASE("cross-representation equality: static table vs live registry") {
    ModelConfig c;
    c.num_blocks = 5;
    c.hidden = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.vocab = 11;
    c.max_positions = 16;

    StaticArch a;
    a.num_blocks = c.num_blocks;
    a.hidden = c.hidden;
    a.num_heads = c.num_heads;
    a.ffn_dim = c.ffn_dim;
    a.vocab = c.vocab;
    a.max_positions = c.max_positions;
    a.type_vocab = 0;
    a.num_classes = c.num_classes;
    a.include_pooler = 0;

    for (PeftKind kind : {PeftKind::full, PeftKind::adapter, PeftKind::bitfit, PeftKind::lora}) {
        Model m = build_model(c, 57);
        PeftConfig peft;
        peft.kind = kind;
        peft.adapter_bottleneck = 4;
        peft.lora_rank = 2;
        switch (kind) {
        case PeftKind::adapter: apply_adapter(m, peft.adapter_bottleneck); break;
        case PeftKind::bitfit: apply_bitfit(m); break;
        case PeftKind::lora: apply_lora(m, peft.lora_rank, peft.lora_alpha, peft.lora_targets); break;
        case PeftKind::full: break;
        }
        const ParamTable live = m.table();
        const ParamTable counted = static_param_count(a, m.applied_peft);

        for (ScheduleVariant v : {ScheduleVariant::standard, ScheduleVariant::without_low_blocks,
                                  ScheduleVariant::from_high_blocks}) {
            for (int64_t T = 1; T <= 5; ++T) {
                const auto schedule = build_stages(partition_blocks(5, T), v);
                const UpdateLedger a1 = count_updated_params(schedule, live, m.applied_peft);
                const UpdateLedger a2 = count_updated_params(schedule, counted, m.applied_peft);
                CHECK(a1.per_epoch == a2.per_epoch);
                CHECK(a1.cumulative == a2.cumulative);
            }
        }
    }
}
