#include "model.hpp"

#include <cmath>

#include "rng.hpp"

namespace progtune {

const char* head_kind_name(HeadKind k) {
    return k == HeadKind::classifier ? "classifier" : "qa_span";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "classifier") return HeadKind::classifier;
    if (name == "qa_span" || name == "qa") return HeadKind::qa_span;
    fail(Errc::config, "unknown head kind '" + name + "' (expected classifier|qa)");
}

const char* tag_class_name(TagKind k) {
    switch (k) {
    case TagKind::embedding: return "embedding";
    case TagKind::block: return "block";
    case TagKind::head: return "head";
    case TagKind::adapter: return "adapter";
    case TagKind::lora: return "lora";
    case TagKind::bias: return "bias";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    if (num_blocks < 1 || hidden < 1 || num_heads < 1 || ffn_dim < 1 || vocab < 1 ||
        max_positions < 1 || num_classes < 1) {
        fail(Errc::config, "model config: all dimensions must be >= 1");
    }
    if (hidden % num_heads != 0) {
        fail(Errc::config, "model config: hidden (" + std::to_string(hidden) +
                               ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
    }
}

void ParameterRegistry::add(const std::string& id, TensorPtr tensor, ParameterTag tag,
                            bool is_bias) {
    if (index_.count(id)) fail(Errc::state, "registry: duplicate parameter id '" + id + "'");
    tensor->name = id;
    index_[id] = entries_.size();
    entries_.push_back({id, std::move(tensor), tag, is_bias});
}

void ParameterRegistry::retag(const std::string& id, ParameterTag tag) {
    auto it = index_.find(id);
    if (it == index_.end()) fail(Errc::state, "registry: unknown parameter id '" + id + "'");
    entries_[it->second].tag = tag;
}

const RegistryEntry& ParameterRegistry::at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(Errc::state, "registry: unknown parameter id '" + id + "'");
    return entries_[it->second];
}

int64_t ParameterRegistry::total_elements() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor->size();
    return n;
}

void ParameterRegistry::zero_grads() const {
    for (const auto& e : entries_) e.tensor->zero_grad();
}

int64_t ParamTable::total_elements() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.elements;
    return n;
}

ParamTable Model::table() const {
    ParamTable t;
    t.applied = applied_peft;
    t.num_blocks = config.num_blocks;
    t.params.reserve(registry.entries().size());
    for (const auto& e : registry.entries()) {
        t.params.push_back({e.id, e.tag, e.tensor->size(), e.is_bias});
    }
    return t;
}

namespace {

TensorPtr init_weight(Rng& rng, Shape shape, const std::string& id) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = rng.truncated_normal(0.02);
    return make_tensor(std::move(shape), std::move(v), true, id);
}

std::string block_prefix(int64_t i) { return "block." + std::to_string(i); }

}  // namespace

Model build_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    m.seed = seed;
    Rng rng(seed);

    const int64_t d = config.hidden;
    const ParameterTag emb_tag{TagKind::embedding, 0, ""};

    m.tok_embed = init_weight(rng, {config.vocab, d}, "embedding.token");
    m.registry.add("embedding.token", m.tok_embed, emb_tag);
    m.pos_embed = init_weight(rng, {config.max_positions, d}, "embedding.position");
    m.registry.add("embedding.position", m.pos_embed, emb_tag);
    m.emb_ln_gamma = full({d}, 1.0, true, "embedding.ln.gamma");
    m.registry.add("embedding.ln.gamma", m.emb_ln_gamma, emb_tag);
    m.emb_ln_beta = zeros({d}, true, "embedding.ln.beta");
    m.registry.add("embedding.ln.beta", m.emb_ln_beta, emb_tag, /*is_bias=*/true);

    m.blocks.resize(static_cast<size_t>(config.num_blocks));
    for (int64_t i = 1; i <= config.num_blocks; ++i) {
        BlockWeights& blk = m.blocks[static_cast<size_t>(i - 1)];
        const ParameterTag tag{TagKind::block, i, ""};
        const std::string p = block_prefix(i);

        auto add_linear = [&](TensorPtr& w, TensorPtr& b, const std::string& name, int64_t in,
                              int64_t out) {
            w = init_weight(rng, {in, out}, p + "." + name + ".w");
            m.registry.add(p + "." + name + ".w", w, tag);
            b = zeros({out}, true, p + "." + name + ".b");
            m.registry.add(p + "." + name + ".b", b, tag, /*is_bias=*/true);
        };

        add_linear(blk.wq, blk.bq, "attn.wq", d, d);
        blk.wk = init_weight(rng, {d, d}, p + ".attn.wk.w");
        m.registry.add(p + ".attn.wk.w", blk.wk, tag);
        add_linear(blk.wv, blk.bv, "attn.wv", d, d);
        add_linear(blk.wo, blk.bo, "attn.wo", d, d);
        blk.ln1_gamma = full({d}, 1.0, true, p + ".ln1.gamma");
        m.registry.add(p + ".ln1.gamma", blk.ln1_gamma, tag);
        blk.ln1_beta = zeros({d}, true, p + ".ln1.beta");
        m.registry.add(p + ".ln1.beta", blk.ln1_beta, tag, /*is_bias=*/true);
        add_linear(blk.ffn_w1, blk.ffn_b1, "ffn.w1", d, config.ffn_dim);
        add_linear(blk.ffn_w2, blk.ffn_b2, "ffn.w2", config.ffn_dim, d);
        blk.ln2_gamma = full({d}, 1.0, true, p + ".ln2.gamma");
        m.registry.add(p + ".ln2.gamma", blk.ln2_gamma, tag);
        blk.ln2_beta = zeros({d}, true, p + ".ln2.beta");
        m.registry.add(p + ".ln2.beta", blk.ln2_beta, tag, /*is_bias=*/true);
    }

    const int64_t head_out = config.head_kind == HeadKind::classifier ? config.num_classes : 2;
    const ParameterTag head_tag{TagKind::head, 0, ""};
    m.head_w = init_weight(rng, {d, head_out}, "head.w");
    m.registry.add("head.w", m.head_w, head_tag);
    m.head_b = zeros({head_out}, true, "head.b");
    m.registry.add("head.b", m.head_b, head_tag, /*is_bias=*/true);

    return m;
}

namespace {

// x.W (+ b), plus the low-rank path when LoRA factors are attached to this matrix.
TensorPtr linear(Tape& tape, const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 const BlockWeights& blk, const std::string& target, double lora_scale) {
    TensorPtr y = tape.matmul(x, w);
    if (b) y = tape.add_bias(y, b);
    auto it = blk.lora.find(target);
    if (it != blk.lora.end()) {
        TensorPtr delta = tape.matmul(tape.matmul(x, it->second.a), it->second.b);
        y = tape.add(y, tape.scale(delta, lora_scale));
    }
    return y;
}

TensorPtr adapter_pass(Tape& tape, const AdapterModule& ad, const TensorPtr& h) {
    TensorPtr z = tape.add_bias(tape.matmul(h, ad.down_w), ad.down_b);
    z = tape.gelu(z);
    z = tape.add_bias(tape.matmul(z, ad.up_w), ad.up_b);
    return tape.add(h, z);
}

}  // namespace

TensorPtr Model::block_forward(Tape& tape, int64_t block_index, const TensorPtr& x, int64_t b,
                               int64_t s, const std::vector<uint8_t>& mask) const {
    if (block_index < 0 || block_index >= config.num_blocks) {
        fail(Errc::index, "block index " + std::to_string(block_index) + " outside [0, " +
                              std::to_string(config.num_blocks) + ")");
    }
    if (x->shape.size() != 2 || x->shape[0] != b * s || x->shape[1] != config.hidden) {
        fail(Errc::shape, "block input must be [" + std::to_string(b * s) + "x" +
                              std::to_string(config.hidden) + "], got " + shape_str(x->shape));
    }
    if (!mask.empty() && static_cast<int64_t>(mask.size()) != b * s) {
        fail(Errc::shape, "mask length " + std::to_string(mask.size()) + " does not match b*s");
    }

    const BlockWeights& blk = blocks[static_cast<size_t>(block_index)];
    const int64_t d = config.hidden;
    const int64_t nh = config.num_heads;
    const int64_t dh = d / nh;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    TensorPtr q = linear(tape, x, blk.wq, blk.bq, blk, "wq", lora_scale);
    TensorPtr k = linear(tape, x, blk.wk, nullptr, blk, "wk", lora_scale);
    TensorPtr v = linear(tape, x, blk.wv, blk.bv, blk, "wv", lora_scale);

    std::vector<TensorPtr> per_batch;
    per_batch.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
        TensorPtr qi = tape.slice_rows(q, i * s, (i + 1) * s);
        TensorPtr ki = tape.slice_rows(k, i * s, (i + 1) * s);
        TensorPtr vi = tape.slice_rows(v, i * s, (i + 1) * s);
        std::vector<uint8_t> key_valid;
        if (mask.empty()) {
            key_valid.assign(static_cast<size_t>(s), 1);
        } else {
            key_valid.assign(mask.begin() + i * s, mask.begin() + (i + 1) * s);
        }
        std::vector<TensorPtr> heads;
        heads.reserve(static_cast<size_t>(nh));
        for (int64_t h = 0; h < nh; ++h) {
            TensorPtr qh = tape.slice_cols(qi, h * dh, (h + 1) * dh);
            TensorPtr kh = tape.slice_cols(ki, h * dh, (h + 1) * dh);
            TensorPtr vh = tape.slice_cols(vi, h * dh, (h + 1) * dh);
            TensorPtr scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), att_scale);
            TensorPtr weights = tape.masked_row_softmax(scores, key_valid);
            heads.push_back(tape.matmul(weights, vh));
        }
        per_batch.push_back(nh == 1 ? heads[0] : tape.concat_cols(heads));
    }
    TensorPtr ctx = b == 1 ? per_batch[0] : tape.concat_rows(per_batch);
    TensorPtr attn_out = linear(tape, ctx, blk.wo, blk.bo, blk, "wo", lora_scale);
    if (blk.adapter_attn) attn_out = adapter_pass(tape, *blk.adapter_attn, attn_out);
    TensorPtr h1 = tape.layer_norm(tape.add(x, attn_out), blk.ln1_gamma, blk.ln1_beta,
                                   layer_norm_eps);

    TensorPtr f = tape.add_bias(tape.matmul(h1, blk.ffn_w1), blk.ffn_b1);
    f = tape.gelu(f);
    f = tape.add_bias(tape.matmul(f, blk.ffn_w2), blk.ffn_b2);
    if (blk.adapter_ffn) f = adapter_pass(tape, *blk.adapter_ffn, f);
    return tape.layer_norm(tape.add(h1, f), blk.ln2_gamma, blk.ln2_beta, layer_norm_eps);
}

TensorPtr Model::forward(Tape& tape, const std::vector<int64_t>& ids, int64_t b, int64_t s,
                         const std::vector<uint8_t>& mask) const {
    if (b < 1 || s < 1 || static_cast<int64_t>(ids.size()) != b * s) {
        fail(Errc::shape, "forward: ids length " + std::to_string(ids.size()) +
                              " does not match b*s = " + std::to_string(b * s));
    }
    if (s > config.max_positions) {
        fail(Errc::length, "forward: sequence length " + std::to_string(s) +
                               " exceeds max_positions " + std::to_string(config.max_positions));
    }
    if (!mask.empty() && static_cast<int64_t>(mask.size()) != b * s) {
        fail(Errc::shape, "forward: mask length does not match ids");
    }

    std::vector<int64_t> pos(static_cast<size_t>(b * s));
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < s; ++j) pos[static_cast<size_t>(i * s + j)] = j;

    TensorPtr x = tape.add(tape.embedding_lookup(tok_embed, ids),
                           tape.embedding_lookup(pos_embed, pos));
    x = tape.layer_norm(x, emb_ln_gamma, emb_ln_beta, layer_norm_eps);

    for (int64_t i = 0; i < config.num_blocks; ++i) x = block_forward(tape, i, x, b, s, mask);

    if (config.head_kind == HeadKind::classifier) {
        // CLS-style pooling: first position of each sequence.
        std::vector<int64_t> cls(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) cls[static_cast<size_t>(i)] = i * s;
        TensorPtr pooled = tape.gather_rows(x, cls);
        return tape.add_bias(tape.matmul(pooled, head_w), head_b);
    }
    TensorPtr span = tape.add_bias(tape.matmul(x, head_w), head_b);
    return tape.reshape(span, {b, s, 2});
}

StaticArch named_arch(const std::string& name) {
    StaticArch a;
    if (name == "bert-base") {
        a.num_blocks = 12;
        a.hidden = 768;
        a.num_heads = 12;
        a.ffn_dim = 3072;
    } else if (name == "bert-large") {
        a.num_blocks = 24;
        a.hidden = 1024;
        a.num_heads = 16;
        a.ffn_dim = 4096;
    } else {
        fail(Errc::config, "unknown architecture '" + name + "' (shipped: bert-base, bert-large)");
    }
    a.vocab = 30522;
    a.max_positions = 512;
    a.type_vocab = 2;
    return a;
}

ParamTable static_param_count(const StaticArch& arch, const PeftConfig& peft) {
    if (arch.num_blocks < 1 || arch.hidden < 1 || arch.num_heads < 1 || arch.ffn_dim < 1 ||
        arch.vocab < 1 || arch.max_positions < 1 || arch.num_classes < 1 || arch.type_vocab < 0) {
        fail(Errc::config, "static count: architecture dims must be fully specified and positive");
    }
    if (arch.hidden % arch.num_heads != 0) {
        fail(Errc::config, "static count: hidden must be divisible by num_heads");
    }
    peft.validate();
    const int64_t d = arch.hidden;
    const int64_t L = arch.num_blocks;

    ParamTable t;
    t.applied = peft;
    t.num_blocks = L;
    auto add = [&t](const std::string& id, ParameterTag tag, int64_t elements, bool is_bias = false) {
        t.params.push_back({id, tag, elements, is_bias});
    };

    const ParameterTag emb{TagKind::embedding, 0, ""};
    add("embedding.token", emb, arch.vocab * d);
    add("embedding.position", emb, arch.max_positions * d);
    if (arch.type_vocab > 0) add("embedding.type", emb, arch.type_vocab * d);
    add("embedding.ln.gamma", emb, d);
    add("embedding.ln.beta", emb, d, true);

    for (int64_t i = 1; i <= L; ++i) {
        const ParameterTag tag{TagKind::block, i, ""};
        const std::string p = block_prefix(i);
        for (const char* mat : {"wq", "wk", "wv", "wo"}) {
            add(p + ".attn." + mat + ".w", tag, d * d);
            if (std::string(mat) != "wk") add(p + ".attn." + std::string(mat) + ".b", tag, d, true);
        }
        add(p + ".ln1.gamma", tag, d);
        add(p + ".ln1.beta", tag, d, true);
        add(p + ".ffn.w1.w", tag, d * arch.ffn_dim);
        add(p + ".ffn.w1.b", tag, arch.ffn_dim, true);
        add(p + ".ffn.w2.w", tag, arch.ffn_dim * d);
        add(p + ".ffn.w2.b", tag, d, true);
        add(p + ".ln2.gamma", tag, d);
        add(p + ".ln2.beta", tag, d, true);
    }

    const ParameterTag head{TagKind::head, 0, ""};
    if (arch.pooler_enabled()) {
        add("head.pooler.w", head, d * d);
        add("head.pooler.b", head, d, true);
    }
    const int64_t head_out = arch.head_kind == HeadKind::classifier ? arch.num_classes : 2;
    add("head.w", head, d * head_out);
    add("head.b", head, head_out, true);

    // PEFT additions and re-tagging, in apply order.
    switch (peft.kind) {
    case PeftKind::full:
        break;
    case PeftKind::adapter: {
        const int64_t bn = peft.adapter_bottleneck;
        if (bn >= d) fail(Errc::config, "adapter bottleneck must be < hidden");
        for (int64_t i = 1; i <= L; ++i) {
            const ParameterTag tag{TagKind::adapter, i, ""};
            const std::string p = block_prefix(i);
            for (const char* slot : {"attn", "ffn"}) {
                add(p + ".adapter." + slot + ".down.w", tag, d * bn);
                add(p + ".adapter." + std::string(slot) + ".down.b", tag, bn, true);
                add(p + ".adapter." + std::string(slot) + ".up.w", tag, bn * d);
                add(p + ".adapter." + std::string(slot) + ".up.b", tag, d, true);
            }
        }
        break;
    }
    case PeftKind::bitfit:
        for (auto& info : t.params) {
            if (info.tag.kind == TagKind::block && info.is_bias) {
                info.tag = ParameterTag{TagKind::bias, info.tag.block, ""};
            }
        }
        break;
    case PeftKind::lora: {
        if (peft.lora_rank >= d) fail(Errc::config, "lora rank must be < hidden");
        for (int64_t i = 1; i <= L; ++i) {
            const std::string p = block_prefix(i);
            for (const std::string& target : peft.lora_targets) {
                const ParameterTag tag{TagKind::lora, i, target};
                add(p + ".lora." + target + ".a", tag, d * peft.lora_rank);
                add(p + ".lora." + target + ".b", tag, peft.lora_rank * d);
            }
        }
        break;
    }
    }
    return t;
}

}  // namespace progtune
