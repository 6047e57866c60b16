#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "peft.hpp"
#include "tensor.hpp"

namespace progtune {

enum class HeadKind { classifier, qa_span };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct ModelConfig {
    int64_t num_blocks = 2;
    int64_t hidden = 16;
    int64_t num_heads = 2;
    int64_t ffn_dim = 32;
    int64_t vocab = 16;
    int64_t max_positions = 16;
    int64_t num_classes = 2;
    HeadKind head_kind = HeadKind::classifier;

    void validate() const;  // throws Errc::config
};

enum class TagKind { embedding, block, head, adapter, lora, bias };

const char* tag_class_name(TagKind k);

// Structural location of a parameter. block is 1-based and meaningful for
// the block-scoped kinds; detail names the LoRA target matrix.
struct ParameterTag {
    TagKind kind = TagKind::embedding;
    int64_t block = 0;
    std::string detail;

    bool operator==(const ParameterTag& o) const {
        return kind == o.kind && block == o.block && detail == o.detail;
    }
};

struct RegistryEntry {
    std::string id;
    TensorPtr tensor;
    ParameterTag tag;
    bool is_bias = false;  // additive offset vector (attention/FFN biases, layernorm beta)
};

// Every trainable parameter of a model, in deterministic registration order.
class ParameterRegistry {
public:
    void add(const std::string& id, TensorPtr tensor, ParameterTag tag, bool is_bias = false);
    void retag(const std::string& id, ParameterTag tag);
    const RegistryEntry& at(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    const std::vector<RegistryEntry>& entries() const { return entries_; }
    int64_t total_elements() const;
    void zero_grads() const;

private:
    std::vector<RegistryEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Shape-free view of a parameter set: what the scheduler and the ledger
// operate on. Produced either from a live registry or analytically by
// static_param_count.
struct ParamInfo {
    std::string id;
    ParameterTag tag;
    int64_t elements = 0;
    bool is_bias = false;
};

struct ParamTable {
    std::vector<ParamInfo> params;
    PeftConfig applied;  // regime the table was derived under
    int64_t num_blocks = 0;

    int64_t total_elements() const;
};

struct AdapterModule {
    TensorPtr down_w, down_b, up_w, up_b;
    int64_t bottleneck = 0;
};

struct LoraFactors {
    TensorPtr a;  // [d, r], random init, applied to the input first
    TensorPtr b;  // [r, d], zero init
};

struct BlockWeights {
    // no key bias: it shifts every attention score row uniformly, which the
    // softmax cancels exactly
    TensorPtr wq, bq, wk, wv, bv, wo, bo;
    TensorPtr ln1_gamma, ln1_beta;
    TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    TensorPtr ln2_gamma, ln2_beta;
    std::optional<AdapterModule> adapter_attn, adapter_ffn;
    // keyed by target matrix name wq|wk|wv|wo
    std::unordered_map<std::string, LoraFactors> lora;
};

// BERT-style encoder: embeddings E, blocks B1..BL, head H. Post-norm residual
// order inside blocks; classifier head reads position 0; attention is scaled
// dot-product without dropout, so runs are bit-reproducible.
struct Model {
    ModelConfig config;
    uint64_t seed = 0;

    TensorPtr tok_embed, pos_embed, emb_ln_gamma, emb_ln_beta;
    std::vector<BlockWeights> blocks;
    TensorPtr head_w, head_b;

    ParameterRegistry registry;
    PeftConfig applied_peft;     // full until a PEFT method is applied
    double lora_scale = 0.0;     // alpha/rank cached at apply time
    double layer_norm_eps = 1e-5;

    ParamTable table() const;
    void zero_grads() const { registry.zero_grads(); }

    // ids/mask are row-major [b*s]; mask entries are nonzero for real tokens.
    // An empty mask means every position is real.
    TensorPtr forward(Tape& tape, const std::vector<int64_t>& ids, int64_t b, int64_t s,
                      const std::vector<uint8_t>& mask = {}) const;

    // x is [b*s, hidden]; block_index is 0-based.
    TensorPtr block_forward(Tape& tape, int64_t block_index, const TensorPtr& x, int64_t b,
                            int64_t s, const std::vector<uint8_t>& mask = {}) const;
};

Model build_model(const ModelConfig& config, uint64_t seed);

// Architecture dims for the static counting model. type_vocab and the pooler
// exist only here (published BERT checkpoints have both); the trainable toy
// model has neither.
struct StaticArch {
    int64_t num_blocks = 12;
    int64_t hidden = 768;
    int64_t num_heads = 12;
    int64_t ffn_dim = 3072;
    int64_t vocab = 30522;
    int64_t max_positions = 512;
    int64_t type_vocab = 2;
    int64_t num_classes = 2;
    HeadKind head_kind = HeadKind::classifier;
    // -1: auto (classifier heads carry the pooler, qa heads do not)
    int include_pooler = -1;

    bool pooler_enabled() const {
        return include_pooler < 0 ? head_kind == HeadKind::classifier : include_pooler > 0;
    }
};

// Shipped architectures: "bert-base", "bert-large". Throws Errc::config for
// anything else.
StaticArch named_arch(const std::string& name);

// Per-parameter element counts computed analytically, no weights
// instantiated. For type_vocab = 0 and the pooler disabled this reproduces
// build_model's registry table exactly (same ids, tags and counts).
ParamTable static_param_count(const StaticArch& arch, const PeftConfig& peft);

}  // namespace progtune
