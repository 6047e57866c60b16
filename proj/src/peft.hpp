#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace progtune {

struct Model;
struct ParamTable;

enum class PeftKind { full, adapter, bitfit, lora };

const char* peft_kind_name(PeftKind k);
PeftKind peft_kind_from_name(const std::string& name);

// Which fine-tuning regime is active and its hyperparameters. For kinds other
// than the one selected, the hyperparameter fields are ignored.
struct PeftConfig {
    PeftKind kind = PeftKind::full;
    int64_t adapter_bottleneck = 64;
    int64_t lora_rank = 8;
    double lora_alpha = 16.0;
    std::vector<std::string> lora_targets = {"wq", "wv"};  // subset of wq|wk|wv|wo

    void validate() const;
    bool operator==(const PeftConfig& o) const;
};

// Adds two bottleneck adapters per block (post-attention and post-FFN), each
// down-project + GELU + up-project with a residual connection. Up-projections
// start at zero, so the model output is unchanged at application time.
// Backbone block parameters are frozen; the head stays trainable.
void apply_adapter(Model& model, int64_t bottleneck);

// Selects bias vectors plus the head as the trainable set. Block bias terms
// are re-tagged BiasTerm(i) so the schedule can divide them; the embedding
// layernorm bias stays under the Embedding tag. No new parameters.
void apply_bitfit(Model& model);

// Attaches zero-initialized low-rank factor pairs to the chosen attention
// matrices: forward becomes W.x + (alpha/rank) * B(A x). Targets are frozen
// along with the rest of the backbone; the head stays trainable.
void apply_lora(Model& model, int64_t rank, double alpha, const std::vector<std::string>& targets);

// The block-divisible trainable groups plus the non-block remainder, as
// indices into table.params. Group b (0-based) holds the trainable parameters
// of block b+1. head_part is trainable in every stage; embedding_part is the
// embedding-class trainable selection (all embeddings under full fine-tuning,
// the embedding layernorm bias under bitfit, empty otherwise), trained every
// epoch unless the schedule overrides embeddings_always.
struct PeftGroups {
    std::vector<std::vector<size_t>> per_block;
    std::vector<size_t> head_part;
    std::vector<size_t> embedding_part;
};

PeftGroups peft_trainable_set(const ParamTable& table, const PeftConfig& peft);

}  // namespace progtune
