#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace progtune {

// Token id 0 is the pad id in every vocabulary; generators emit ids >= 1.
constexpr int64_t kPadId = 0;

enum class TaskKind { keyword_detect, majority_class, depth_pattern };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct TaskSpec {
    TaskKind kind = TaskKind::keyword_detect;
    int64_t vocab_size = 16;
    int64_t seq_len = 8;
    int64_t num_classes = 2;
    int64_t train_n = 128;
    int64_t eval_n = 32;
    uint64_t seed = 7;

    void validate() const;
};

struct Example {
    std::vector<int64_t> tokens;  // ids in [1, vocab)
    int64_t label = 0;
};

struct TaskData {
    TaskSpec spec;
    std::vector<Example> train;
    std::vector<Example> eval;
};

// Deterministic by seed; train and eval are disjoint by construction (global
// de-duplication across both splits) and each split's labels are balanced
// within +-1.
TaskData generate_task(const TaskSpec& spec);

struct Batch {
    int64_t rows = 0;              // b
    int64_t cols = 0;              // padded length s
    std::vector<int64_t> ids;      // row-major [b*s], right-padded with kPadId
    std::vector<uint8_t> mask;     // 1 for real tokens
};

Batch tokenize_batch(const std::vector<std::vector<int64_t>>& sequences, int64_t pad_to);

// "5 7" -> {5, 7}
std::vector<int64_t> parse_ids(const std::string& text);

}  // namespace progtune
