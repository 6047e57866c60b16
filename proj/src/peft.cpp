#include "peft.hpp"

#include <algorithm>

#include "model.hpp"
#include "rng.hpp"

namespace progtune {

namespace {

const std::vector<std::string> kLoraTargets = {"wq", "wk", "wv", "wo"};

void freeze_backbone(Model& m) {
    for (const auto& e : m.registry.entries()) {
        if (e.tag.kind == TagKind::block || e.tag.kind == TagKind::embedding) {
            e.tensor->requires_grad = false;
        }
    }
}

void require_unapplied(const Model& m, const char* method) {
    if (m.applied_peft.kind != PeftKind::full) {
        fail(Errc::state, std::string(method) + ": a PEFT method was already applied to this model");
    }
}

}  // namespace

const char* peft_kind_name(PeftKind k) {
    switch (k) {
    case PeftKind::full: return "full";
    case PeftKind::adapter: return "adapter";
    case PeftKind::bitfit: return "bitfit";
    case PeftKind::lora: return "lora";
    }
    return "unknown";
}

PeftKind peft_kind_from_name(const std::string& name) {
    if (name == "full") return PeftKind::full;
    if (name == "adapter") return PeftKind::adapter;
    if (name == "bitfit") return PeftKind::bitfit;
    if (name == "lora") return PeftKind::lora;
    fail(Errc::config, "unknown peft kind '" + name + "' (expected full|adapter|bitfit|lora)");
}

void PeftConfig::validate() const {
    switch (kind) {
    case PeftKind::full:
    case PeftKind::bitfit:
        return;
    case PeftKind::adapter:
        if (adapter_bottleneck < 1) fail(Errc::config, "adapter bottleneck must be >= 1");
        return;
    case PeftKind::lora:
        if (lora_rank < 1) fail(Errc::config, "lora rank must be >= 1");
        if (!(lora_alpha > 0.0)) fail(Errc::config, "lora alpha must be > 0");
        if (lora_targets.empty()) fail(Errc::config, "lora targets must be nonempty");
        for (const auto& t : lora_targets) {
            if (std::find(kLoraTargets.begin(), kLoraTargets.end(), t) == kLoraTargets.end()) {
                fail(Errc::config, "unknown lora target '" + t + "' (expected wq|wk|wv|wo)");
            }
            if (std::count(lora_targets.begin(), lora_targets.end(), t) != 1) {
                fail(Errc::config, "duplicate lora target '" + t + "'");
            }
        }
        return;
    }
}

bool PeftConfig::operator==(const PeftConfig& o) const {
    if (kind != o.kind) return false;
    switch (kind) {
    case PeftKind::full:
    case PeftKind::bitfit:
        return true;
    case PeftKind::adapter:
        return adapter_bottleneck == o.adapter_bottleneck;
    case PeftKind::lora:
        return lora_rank == o.lora_rank && lora_alpha == o.lora_alpha &&
               lora_targets == o.lora_targets;
    }
    return false;
}

void apply_adapter(Model& m, int64_t bottleneck) {
    require_unapplied(m, "apply_adapter");
    const int64_t d = m.config.hidden;
    if (bottleneck < 1) fail(Errc::config, "adapter bottleneck must be >= 1");
    if (bottleneck >= d) {
        fail(Errc::config, "adapter bottleneck " + std::to_string(bottleneck) +
                               " must be < hidden " + std::to_string(d));
    }

    Rng rng(mix_seed(m.seed, 0xada77e5));
    for (int64_t i = 1; i <= m.config.num_blocks; ++i) {
        BlockWeights& blk = m.blocks[static_cast<size_t>(i - 1)];
        const ParameterTag tag{TagKind::adapter, i, ""};
        const std::string p = "block." + std::to_string(i) + ".adapter.";
        for (const char* slot : {"attn", "ffn"}) {
            AdapterModule ad;
            ad.bottleneck = bottleneck;
            const std::string q = p + slot;
            std::vector<double> dw(static_cast<size_t>(d * bottleneck));
            for (double& x : dw) x = rng.truncated_normal(0.02);
            ad.down_w = make_tensor({d, bottleneck}, std::move(dw), true, q + ".down.w");
            ad.down_b = zeros({bottleneck}, true, q + ".down.b");
            // zero-initialized up-projection keeps the forward output unchanged
            ad.up_w = zeros({bottleneck, d}, true, q + ".up.w");
            ad.up_b = zeros({d}, true, q + ".up.b");
            m.registry.add(q + ".down.w", ad.down_w, tag);
            m.registry.add(q + ".down.b", ad.down_b, tag, /*is_bias=*/true);
            m.registry.add(q + ".up.w", ad.up_w, tag);
            m.registry.add(q + ".up.b", ad.up_b, tag, /*is_bias=*/true);
            if (std::string(slot) == "attn") {
                blk.adapter_attn = std::move(ad);
            } else {
                blk.adapter_ffn = std::move(ad);
            }
        }
    }
    freeze_backbone(m);
    m.applied_peft = PeftConfig{PeftKind::adapter, bottleneck};
}

void apply_bitfit(Model& m) {
    require_unapplied(m, "apply_bitfit");
    for (const auto& e : m.registry.entries()) {
        switch (e.tag.kind) {
        case TagKind::block:
            if (e.is_bias) {
                m.registry.retag(e.id, ParameterTag{TagKind::bias, e.tag.block, ""});
                e.tensor->requires_grad = true;
            } else {
                e.tensor->requires_grad = false;
            }
            break;
        case TagKind::embedding:
            // embedding layernorm bias rides with the Embedding tag
            e.tensor->requires_grad = e.is_bias;
            break;
        case TagKind::head:
            e.tensor->requires_grad = true;
            break;
        default:
            break;
        }
    }
    PeftConfig cfg;
    cfg.kind = PeftKind::bitfit;
    m.applied_peft = cfg;
}

void apply_lora(Model& m, int64_t rank, double alpha, const std::vector<std::string>& targets) {
    require_unapplied(m, "apply_lora");
    PeftConfig cfg;
    cfg.kind = PeftKind::lora;
    cfg.lora_rank = rank;
    cfg.lora_alpha = alpha;
    cfg.lora_targets = targets;
    cfg.validate();
    const int64_t d = m.config.hidden;
    if (rank >= d) {
        fail(Errc::config,
             "lora rank " + std::to_string(rank) + " must be < hidden " + std::to_string(d));
    }

    Rng rng(mix_seed(m.seed, 0x10aa));
    for (int64_t i = 1; i <= m.config.num_blocks; ++i) {
        BlockWeights& blk = m.blocks[static_cast<size_t>(i - 1)];
        const std::string p = "block." + std::to_string(i) + ".lora.";
        for (const std::string& target : targets) {
            const ParameterTag tag{TagKind::lora, i, target};
            LoraFactors f;
            std::vector<double> av(static_cast<size_t>(d * rank));
            for (double& x : av) x = rng.truncated_normal(0.02);
            f.a = make_tensor({d, rank}, std::move(av), true, p + target + ".a");
            f.b = zeros({rank, d}, true, p + target + ".b");  // zero init: no-op at start
            m.registry.add(p + target + ".a", f.a, tag);
            m.registry.add(p + target + ".b", f.b, tag);
            blk.lora[target] = std::move(f);
        }
    }
    freeze_backbone(m);
    m.lora_scale = alpha / static_cast<double>(rank);
    m.applied_peft = cfg;
}

PeftGroups peft_trainable_set(const ParamTable& table, const PeftConfig& peft) {
    peft.validate();
    if (!(table.applied == peft)) {
        fail(Errc::state, "peft_trainable_set: requested regime (" +
                              std::string(peft_kind_name(peft.kind)) +
                              ") was not applied to this parameter set");
    }

    TagKind block_class = TagKind::block;
    switch (peft.kind) {
    case PeftKind::full: block_class = TagKind::block; break;
    case PeftKind::adapter: block_class = TagKind::adapter; break;
    case PeftKind::bitfit: block_class = TagKind::bias; break;
    case PeftKind::lora: block_class = TagKind::lora; break;
    }

    PeftGroups g;
    g.per_block.resize(static_cast<size_t>(table.num_blocks));
    for (size_t idx = 0; idx < table.params.size(); ++idx) {
        const ParamInfo& p = table.params[idx];
        if (p.tag.kind == block_class && p.tag.block >= 1 && p.tag.block <= table.num_blocks) {
            g.per_block[static_cast<size_t>(p.tag.block - 1)].push_back(idx);
        } else if (p.tag.kind == TagKind::head) {
            g.head_part.push_back(idx);
        } else if (p.tag.kind == TagKind::embedding) {
            if (peft.kind == PeftKind::full || (peft.kind == PeftKind::bitfit && p.is_bias)) {
                g.embedding_part.push_back(idx);
            }
        }
    }
    return g;
}

}  // namespace progtune
