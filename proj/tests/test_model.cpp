#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>

#include "model.hpp"
#include "rng.hpp"

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

// Closed-form parameter count written independently of the builder and of
// static_param_count: embeddings (token, position, layernorm), per block the
// four attention projections (three biased, the key projection bias-free),
// two layernorms, and the two FFN linears, plus the task head.
int64_t closed_form_total(const ModelConfig& c) {
    const int64_t d = c.hidden;
    int64_t emb = c.vocab * d + c.max_positions * d + 2 * d;
    int64_t attn = 4 * d * d + 3 * d;
    int64_t ffn = d * c.ffn_dim + c.ffn_dim + c.ffn_dim * d + d;
    int64_t norms = 2 * (2 * d);
    int64_t head_out = c.head_kind == HeadKind::classifier ? c.num_classes : 2;
    int64_t head = d * head_out + head_out;
    return emb + c.num_blocks * (attn + ffn + norms) + head;
}

std::vector<double> flat_params(const Model& m) {
    std::vector<double> out;
    for (const auto& e : m.registry.entries()) {
        out.insert(out.end(), e.tensor->data.begin(), e.tensor->data.end());
    }
    return out;
}

}  // namespace

TEST_CASE("build_model registry covers every block tag") {
    ModelConfig c = tiny_config();
    c.num_blocks = 12;
    c.hidden = 4;
    c.num_heads = 2;
    c.ffn_dim = 8;
    Model m = build_model(c, 1);
    std::set<int64_t> blocks;
    for (const auto& e : m.registry.entries()) {
        if (e.tag.kind == TagKind::block) blocks.insert(e.tag.block);
    }
    for (int64_t i = 1; i <= 12; ++i) CHECK(blocks.count(i) == 1);
}

TEST_CASE("registry total equals the closed-form count") {
    ModelConfig c = tiny_config();
    Model m = build_model(c, 3);
    CHECK(m.registry.total_elements() == closed_form_total(c));
    CHECK(m.table().total_elements() == closed_form_total(c));

    ModelConfig qa = tiny_config();
    qa.head_kind = HeadKind::qa_span;
    Model mq = build_model(qa, 3);
    CHECK(mq.registry.total_elements() == closed_form_total(qa));
}

TEST_CASE("same seed builds bit-identical weights") {
    Model a = build_model(tiny_config(), 42);
    Model b = build_model(tiny_config(), 42);
    auto fa = flat_params(a), fb = flat_params(b);
    REQUIRE(fa.size() == fb.size());
    CHECK(std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0);

    Model other = build_model(tiny_config(), 43);
    CHECK(flat_params(other) != fa);
}

TEST_CASE("invalid configs are rejected") {
    ModelConfig c = tiny_config();
    c.num_heads = 3;  // does not divide hidden=8
    CHECK_THROWS_AS(build_model(c, 1), Error);
    c = tiny_config();
    c.vocab = 0;
    CHECK_THROWS_AS(build_model(c, 1), Error);
}

TEST_CASE("block_forward keeps shape and matches the s=1 degenerate form") {
    ModelConfig c = tiny_config();
    Model m = build_model(c, 7);
    Rng rng(9);

    SUBCASE("output shape equals input shape for several (b, s)") {
        for (auto [b, s] : {std::pair<int64_t, int64_t>{1, 1}, {2, 3}, {3, 5}}) {
            std::vector<double> xs(static_cast<size_t>(b * s * c.hidden));
            for (double& v : xs) v = rng.normal();
            auto x = make_tensor({b * s, c.hidden}, xs);
            Tape tape;
            auto y = m.block_forward(tape, 0, x, b, s);
            CHECK(y->shape == Shape{b * s, c.hidden});
            CHECK(all_finite(*y));
        }
    }

    SUBCASE("s=1: softmax over one position makes attention the value projection") {
        std::vector<double> xs(static_cast<size_t>(c.hidden));
        for (double& v : xs) v = rng.normal();
        auto x = make_tensor({1, c.hidden}, xs);
        Tape tape;
        auto y = m.block_forward(tape, 0, x, 1, 1);

        // independent composition: v = x.Wv + bv, attn = v.Wo + bo, then the
        // two residual+norm sublayers
        const BlockWeights& blk = m.blocks[0];
        Tape ref;
        auto v = ref.add_bias(ref.matmul(x, blk.wv), blk.bv);
        auto attn = ref.add_bias(ref.matmul(v, blk.wo), blk.bo);
        auto h1 = ref.layer_norm(ref.add(x, attn), blk.ln1_gamma, blk.ln1_beta, m.layer_norm_eps);
        auto f = ref.add_bias(ref.matmul(h1, blk.ffn_w1), blk.ffn_b1);
        f = ref.gelu(f);
        f = ref.add_bias(ref.matmul(f, blk.ffn_w2), blk.ffn_b2);
        auto expect = ref.layer_norm(ref.add(h1, f), blk.ln2_gamma, blk.ln2_beta, m.layer_norm_eps);

        for (size_t i = 0; i < expect->data.size(); ++i) {
            CHECK(y->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));
        }
    }

    SUBCASE("shape mismatch is rejected") {
        auto bad = zeros({3, c.hidden});
        Tape tape;
        CHECK_THROWS_AS(m.block_forward(tape, 0, bad, 2, 2), Error);
    }
}

TEST_CASE("single block gradients pass the finite-difference check") {
    ModelConfig c = tiny_config();
    c.num_blocks = 1;
    Model m = build_model(c, 11);
    // O(1) weights keep every gradient entry well away from the central
    // difference noise floor
    Rng rng(13);
    for (const auto& e : m.registry.entries()) {
        for (double& v : e.tensor->data) v = 0.5 * rng.normal();
    }

    std::vector<TensorPtr> params;
    for (const auto& e : m.registry.entries()) {
        if (e.tag.kind == TagKind::block) params.push_back(e.tensor);
    }
    std::vector<int64_t> ids = {1, 2, 3, 4, 5, 6, 7, 8};
    auto report = grad_check(
        [&](Tape& t) { return t.softmax_cross_entropy(m.forward(t, ids, 2, 4), {0, 1}); },
        params, 1e-5);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("forward logits: shape, finiteness, batch permutation") {
    ModelConfig c = tiny_config();
    c.num_classes = 3;
    Model m = build_model(c, 5);
    std::vector<int64_t> ids = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 1, 2, 3, 4, 5};  // b=3, s=5
    Tape tape;
    auto logits = m.forward(tape, ids, 3, 5);
    CHECK(logits->shape == Shape{3, 3});
    CHECK(all_finite(*logits));

    // permuting batch rows permutes logits rows identically
    std::vector<int64_t> perm_ids(ids.begin() + 5, ids.end());
    perm_ids.insert(perm_ids.end(), ids.begin(), ids.begin() + 5);
    Tape tape2;
    auto swapped = m.forward(tape2, perm_ids, 3, 5);
    for (int64_t j = 0; j < 3; ++j) {
        CHECK(swapped->data[0 * 3 + j] == logits->data[1 * 3 + j]);
        CHECK(swapped->data[1 * 3 + j] == logits->data[2 * 3 + j]);
        CHECK(swapped->data[2 * 3 + j] == logits->data[0 * 3 + j]);
    }
}

TEST_CASE("qa_span head emits [b, s, 2] logits") {
    ModelConfig c = tiny_config();
    c.head_kind = HeadKind::qa_span;
    Model m = build_model(c, 5);
    Tape tape;
    auto logits = m.forward(tape, {1, 2, 3, 4, 5, 6}, 2, 3);
    CHECK(logits->shape == Shape{2, 3, 2});
}

TEST_CASE("overlong sequences are a length error") {
    Model m = build_model(tiny_config(), 5);
    std::vector<int64_t> ids(static_cast<size_t>(17), 1);
    Tape tape;
    try {
        m.forward(tape, ids, 1, 17);
        FAIL("expected a length error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::length);
    }
}

TEST_CASE("structural gradient flow: chained blocks and the head get grads") {
    ModelConfig c = tiny_config();
    c.num_blocks = 3;
    Model m = build_model(c, 19);
    Tape tape;
    auto logits = m.forward(tape, {1, 2, 3, 4}, 1, 4);
    auto loss = tape.softmax_cross_entropy(logits, {1});
    tape.backward(loss);

    auto block_has_grad = [&](int64_t i) {
        for (const auto& e : m.registry.entries()) {
            if (e.tag.kind != TagKind::block || e.tag.block != i) continue;
            if (!e.tensor->has_grad()) continue;
            for (double g : e.tensor->grad) {
                if (g != 0.0) return true;
            }
        }
        return false;
    };
    for (int64_t i = 1; i <= 3; ++i) CHECK(block_has_grad(i));
    REQUIRE(m.head_w->has_grad());
    bool head_nonzero = false;
    for (double g : m.head_w->grad) head_nonzero |= (g != 0.0);
    CHECK(head_nonzero);
}

TEST_CASE("static_param_count reproduces the published architecture sizes") {
    PeftConfig full;
    SUBCASE("bert-base classifier is ~110M (pooler included)") {
        StaticArch a = named_arch("bert-base");
        const int64_t n = static_param_count(a, full).total_elements();
        CHECK(n == 109474562);  // 108,882,432 backbone + pooler + 2-way head
        CHECK(std::abs(n - 110000000) < 0.02 * 110000000);
    }
    SUBCASE("bert-base qa head drops the pooler") {
        StaticArch a = named_arch("bert-base");
        a.head_kind = HeadKind::qa_span;
        const int64_t n = static_param_count(a, full).total_elements();
        CHECK(n == 108883970);
    }
    SUBCASE("bert-large classifier is ~335M") {
        StaticArch a = named_arch("bert-large");
        const int64_t n = static_param_count(a, full).total_elements();
        CHECK(n == 335119362);
    }
    SUBCASE("include_pooler override is honored") {
        StaticArch a = named_arch("bert-base");
        a.include_pooler = 0;
        const int64_t without = static_param_count(a, full).total_elements();
        a.include_pooler = 1;
        const int64_t with = static_param_count(a, full).total_elements();
        CHECK(with - without == 768 * 768 + 768);
    }
    SUBCASE("unknown arch name is a config error") {
        CHECK_THROWS_AS(named_arch("bert-huge"), Error);
    }
}

TEST_CASE("static table matches the instantiated tiny registry exactly") {
    ModelConfig c = tiny_config();
    Model m = build_model(c, 23);

    StaticArch a;
    a.num_blocks = c.num_blocks;
    a.hidden = c.hidden;
    a.num_heads = c.num_heads;
    a.ffn_dim = c.ffn_dim;
    a.vocab = c.vocab;
    a.max_positions = c.max_positions;
    a.type_vocab = 0;
    a.num_classes = c.num_classes;
    a.head_kind = c.head_kind;
    a.include_pooler = 0;

    const ParamTable live = m.table();
    const ParamTable counted = static_param_count(a, PeftConfig{});
    REQUIRE(live.params.size() == counted.params.size());
    for (size_t i = 0; i < live.params.size(); ++i) {
        CHECK(live.params[i].id == counted.params[i].id);
        CHECK(live.params[i].elements == counted.params[i].elements);
        CHECK(live.params[i].tag == counted.params[i].tag);
        CHECK(live.params[i].is_bias == counted.params[i].is_bias);
    }
    CHECK(live.total_elements() == counted.total_elements());
}
