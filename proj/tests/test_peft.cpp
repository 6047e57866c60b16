#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "model.hpp"
#include "peft.hpp"

using namespace progtune;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.num_blocks = 2;
    c.hidden = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.vocab = 11;
    c.max_positions = 16;
    c.num_classes = 2;
    return c;
}

const std::vector<int64_t> kIds = {1, 2, 3, 4, 5, 6, 7, 8};  // b=2, s=4

std::vector<double> logits_of(const Model& m) {
    Tape tape(false);
    return m.forward(tape, kIds, 2, 4)->data;
}

}  // namespace

TEST_CASE("adapter parameter arithmetic at published dims") {
    PeftConfig peft;
    peft.kind = PeftKind::adapter;
    peft.adapter_bottleneck = 64;
    StaticArch a = named_arch("bert-base");
    const ParamTable t = static_param_count(a, peft);
    int64_t block1 = 0;
    for (const auto& p : t.params) {
        if (p.tag.kind == TagKind::adapter && p.tag.block == 1) block1 += p.elements;
    }
    // per adapter: 768*64+64 down + 64*768+768 up = 99,136; two per block
    CHECK(block1 == 198272);
}

TEST_CASE("apply_adapter: transparency, freeze, tags") {
    Model m = build_model(tiny_config(), 21);
    const auto before = logits_of(m);
    apply_adapter(m, 4);
    const auto after = logits_of(m);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(std::fabs(after[i] - before[i]) <= 1e-12);
    }

    int64_t adapter_params = 0;
    for (const auto& e : m.registry.entries()) {
        if (e.tag.kind == TagKind::block) CHECK_FALSE(e.tensor->requires_grad);
        if (e.tag.kind == TagKind::adapter) {
            CHECK(e.tensor->requires_grad);
            adapter_params += e.tensor->size();
        }
        if (e.tag.kind == TagKind::head) CHECK(e.tensor->requires_grad);
    }
    // down(8->4)+up(4->8) twice per block, 2 blocks
    CHECK(adapter_params == 2 * 2 * (8 * 4 + 4 + 4 * 8 + 8));

    SUBCASE("bottleneck >= hidden is a config error") {
        Model fresh = build_model(tiny_config(), 21);
        CHECK_THROWS_AS(apply_adapter(fresh, 8), Error);
    }
    SUBCASE("double application is a state error") {
        CHECK_THROWS_AS(apply_adapter(m, 2), Error);
    }
}

TEST_CASE("apply_bitfit matches hand enumeration") {
    Model m = build_model(tiny_config(), 22);
    const auto before = logits_of(m);
    apply_bitfit(m);
    CHECK(logits_of(m) == before);  // selection only, nothing new in forward

    int64_t trainable = 0;
    for (const auto& e : m.registry.entries()) {
        if (e.tensor->requires_grad) trainable += e.tensor->size();
    }
    // per block: bq+bv+bo = 24, ln1.beta 8, ffn.b1 16, ffn.b2 8, ln2.beta 8 -> 64
    // embedding ln beta 8; head 8*2+2 = 18
    const int64_t expected = 2 * (3 * 8 + 8 + 16 + 8 + 8) + 8 + (8 * 2 + 2);
    CHECK(trainable == expected);

    // block bias terms were re-tagged so the schedule can divide them
    int64_t bias_tagged = 0;
    for (const auto& e : m.registry.entries()) {
        if (e.tag.kind == TagKind::bias) {
            bias_tagged += e.tensor->size();
            CHECK(e.tensor->requires_grad);
        }
    }
    CHECK(bias_tagged == 2 * (3 * 8 + 8 + 16 + 8 + 8));

    // bias-only selection: nothing trainable is a matrix except head weights
    for (const auto& e : m.registry.entries()) {
        if (!e.tensor->requires_grad || e.id == "head.w") continue;
        int64_t wide_dims = 0;
        for (int64_t d : e.tensor->shape) {
            if (d > 1) ++wide_dims;
        }
        CHECK(wide_dims <= 1);
    }
}

TEST_CASE("apply_lora: counts, transparency, merge equivalence") {
    SUBCASE("published-dim closed-form count") {
        PeftConfig peft;
        peft.kind = PeftKind::lora;
        peft.lora_rank = 8;
        peft.lora_targets = {"wq"};
        StaticArch a = named_arch("bert-base");
        const ParamTable t = static_param_count(a, peft);
        int64_t block1 = 0;
        for (const auto& p : t.params) {
            if (p.tag.kind == TagKind::lora && p.tag.block == 1) block1 += p.elements;
        }
        CHECK(block1 == 2 * 768 * 8);
    }

    Model m = build_model(tiny_config(), 23);
    const auto before = logits_of(m);
    apply_lora(m, 2, 4.0, {"wq", "wv"});
    const auto after = logits_of(m);
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(std::fabs(after[i] - before[i]) <= 1e-12);  // B starts at zero
    }

    SUBCASE("merged weights reproduce the low-rank forward") {
        // make the low-rank path non-trivial first
        int64_t c = 0;
        for (auto& [target, f] : m.blocks[0].lora) {
            for (double& v : f.b->data) v = 0.01 * static_cast<double>(++c % 7 - 3);
        }
        for (auto& [target, f] : m.blocks[1].lora) {
            for (double& v : f.b->data) v = 0.02 * static_cast<double>(++c % 5 - 2);
        }
        const auto lora_logits = logits_of(m);

        Model merged = build_model(tiny_config(), 23);
        const double s = m.lora_scale;
        for (size_t bi = 0; bi < 2; ++bi) {
            for (const auto& [target, f] : m.blocks[bi].lora) {
                TensorPtr w = target == "wq" ? merged.blocks[bi].wq : merged.blocks[bi].wv;
                const int64_t d = 8, r = 2;
                for (int64_t p = 0; p < d; ++p)
                    for (int64_t q = 0; q < d; ++q) {
                        double acc = 0.0;
                        for (int64_t t = 0; t < r; ++t)
                            acc += f.a->data[p * r + t] * f.b->data[t * d + q];
                        w->data[p * d + q] += s * acc;
                    }
            }
        }
        const auto merged_logits = logits_of(merged);
        for (size_t i = 0; i < lora_logits.size(); ++i) {
            CHECK(std::fabs(merged_logits[i] - lora_logits[i]) <= 1e-10);
        }
    }

    SUBCASE("rank >= hidden is a config error") {
        Model fresh = build_model(tiny_config(), 23);
        CHECK_THROWS_AS(apply_lora(fresh, 8, 16.0, {"wq"}), Error);
    }
    SUBCASE("bad targets are config errors") {
        Model fresh = build_model(tiny_config(), 23);
        CHECK_THROWS_AS(apply_lora(fresh, 2, 4.0, {}), Error);
        CHECK_THROWS_AS(apply_lora(fresh, 2, 4.0, {"wx"}), Error);
        CHECK_THROWS_AS(apply_lora(fresh, 2, 4.0, {"wq", "wq"}), Error);
    }
}

TEST_CASE("peft_trainable_set groups") {
    SUBCASE("full: every block group is the whole block") {
        ModelConfig c = tiny_config();
        c.num_blocks = 12;
        c.hidden = 4;
        c.num_heads = 2;
        c.ffn_dim = 8;
        Model m = build_model(c, 31);
        const ParamTable table = m.table();
        const PeftGroups g = peft_trainable_set(table, PeftConfig{});
        REQUIRE(g.per_block.size() == 12);
        for (int64_t i = 0; i < 12; ++i) {
            int64_t group = 0;
            for (size_t idx : g.per_block[static_cast<size_t>(i)]) {
                group += table.params[idx].elements;
            }
            int64_t direct = 0;
            for (const auto& p : table.params) {
                if (p.tag.kind == TagKind::block && p.tag.block == i + 1) direct += p.elements;
            }
            CHECK(group == direct);
        }
        // embeddings ride along under full fine-tuning
        CHECK_FALSE(g.embedding_part.empty());
        CHECK_FALSE(g.head_part.empty());
    }

    SUBCASE("lora with {wq, wv}: two matrices x two factors per block") {
        Model m = build_model(tiny_config(), 33);
        apply_lora(m, 2, 4.0, {"wq", "wv"});
        const ParamTable table = m.table();
        const PeftGroups g = peft_trainable_set(table, m.applied_peft);
        for (const auto& group : g.per_block) CHECK(group.size() == 4);
        CHECK(g.embedding_part.empty());
    }

    SUBCASE("bitfit groups cross-check against apply_bitfit flags") {
        Model m = build_model(tiny_config(), 35);
        apply_bitfit(m);
        const ParamTable table = m.table();
        const PeftGroups g = peft_trainable_set(table, m.applied_peft);
        int64_t grouped = 0;
        for (const auto& group : g.per_block) {
            for (size_t idx : group) grouped += table.params[idx].elements;
        }
        for (size_t idx : g.head_part) grouped += table.params[idx].elements;
        for (size_t idx : g.embedding_part) grouped += table.params[idx].elements;

        int64_t flagged = 0;
        for (const auto& e : m.registry.entries()) {
            if (e.tensor->requires_grad) flagged += e.tensor->size();
        }
        CHECK(grouped == flagged);  // count additivity, exact
    }

    SUBCASE("requesting an unapplied regime is a state error") {
        Model m = build_model(tiny_config(), 37);
        PeftConfig lora;
        lora.kind = PeftKind::lora;
        CHECK_THROWS_AS(peft_trainable_set(m.table(), lora), Error);
    }
}
