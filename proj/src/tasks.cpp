#include "tasks.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "rng.hpp"

namespace progtune {

namespace {

constexpr int64_t kKeyword = 1;   // keyword_detect marker
constexpr int64_t kDepthA = 1;    // depth_pattern markers
constexpr int64_t kDepthB = 2;
constexpr int64_t kMaxTries = 100000;

int64_t token_class(int64_t token, int64_t num_classes) { return (token - 1) % num_classes; }

}  // namespace

const char* task_kind_name(TaskKind k) {
    switch (k) {
    case TaskKind::keyword_detect: return "keyword_detect";
    case TaskKind::majority_class: return "majority_class";
    case TaskKind::depth_pattern: return "depth_pattern";
    }
    return "unknown";
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "keyword_detect") return TaskKind::keyword_detect;
    if (name == "majority_class") return TaskKind::majority_class;
    if (name == "depth_pattern") return TaskKind::depth_pattern;
    fail(Errc::config, "unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
    if (seq_len < 1) fail(Errc::config, "task: seq_len must be >= 1");
    if (train_n < 1 || eval_n < 1) fail(Errc::config, "task: split sizes must be >= 1");
    switch (kind) {
    case TaskKind::keyword_detect:
        if (num_classes != 2) fail(Errc::config, "keyword_detect is binary (num_classes = 2)");
        // pad, keyword, and at least one filler token
        if (vocab_size < 3) fail(Errc::config, "keyword_detect needs vocab_size >= 3");
        break;
    case TaskKind::majority_class:
        if (num_classes < 2) fail(Errc::config, "majority_class needs num_classes >= 2");
        if (vocab_size < num_classes + 1) {
            fail(Errc::config, "majority_class needs vocab_size >= num_classes + 1");
        }
        break;
    case TaskKind::depth_pattern:
        if (num_classes != 2) fail(Errc::config, "depth_pattern is binary (num_classes = 2)");
        if (vocab_size < 4) fail(Errc::config, "depth_pattern needs vocab_size >= 4");
        if (seq_len < 2) fail(Errc::config, "depth_pattern needs seq_len >= 2");
        break;
    }
}

namespace {

// One sequence for the requested label; the caller handles de-duplication.
std::vector<int64_t> draw_sequence(Rng& rng, const TaskSpec& spec, int64_t label, int64_t variant) {
    const int64_t V = spec.vocab_size;
    const int64_t min_len = std::max<int64_t>(spec.kind == TaskKind::depth_pattern ? 2 : 1,
                                              spec.seq_len / 2);
    const int64_t len = min_len + rng.below(spec.seq_len - min_len + 1);
    std::vector<int64_t> seq(static_cast<size_t>(len));

    switch (spec.kind) {
    case TaskKind::keyword_detect: {
        // fillers exclude the keyword so negatives stay negative
        for (auto& t : seq) {
            t = 2 + rng.below(V - 2);
        }
        if (label == 1) seq[static_cast<size_t>(rng.below(len))] = kKeyword;
        return seq;
    }
    case TaskKind::majority_class: {
        for (;;) {
            for (auto& t : seq) {
                if (rng.uniform() < 0.6) {
                    // draw from the target class
                    const int64_t per_class = (V - 2 - label) / spec.num_classes + 1;
                    t = 1 + label + spec.num_classes * rng.below(per_class);
                } else {
                    t = 1 + rng.below(V - 1);
                }
            }
            std::vector<int64_t> counts(static_cast<size_t>(spec.num_classes), 0);
            for (int64_t t : seq) counts[static_cast<size_t>(token_class(t, spec.num_classes))]++;
            const int64_t best = *std::max_element(counts.begin(), counts.end());
            int64_t winners = 0, winner = -1;
            for (int64_t c = 0; c < spec.num_classes; ++c) {
                if (counts[static_cast<size_t>(c)] == best) {
                    ++winners;
                    winner = c;
                }
            }
            if (winners == 1 && winner == label) return seq;
        }
    }
    case TaskKind::depth_pattern: {
        // label = presence(A) xor presence(B); variant picks the quadrant
        const bool has_a = variant % 2 == 0;
        const bool has_b = (label == 1) ? !has_a : has_a;
        for (auto& t : seq) t = 3 + rng.below(V - 3);
        if (has_a && has_b) {
            const int64_t pa = rng.below(len);
            int64_t pb = rng.below(len - 1);
            if (pb >= pa) ++pb;
            seq[static_cast<size_t>(pa)] = kDepthA;
            seq[static_cast<size_t>(pb)] = kDepthB;
        } else if (has_a) {
            seq[static_cast<size_t>(rng.below(len))] = kDepthA;
        } else if (has_b) {
            seq[static_cast<size_t>(rng.below(len))] = kDepthB;
        }
        return seq;
    }
    }
    fail(Errc::config, "unreachable task kind");
}

std::vector<Example> build_split(Rng& rng, const TaskSpec& spec, int64_t n,
                                 std::set<std::vector<int64_t>>& seen) {
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t label = i % spec.num_classes;  // balanced within +-1
        const int64_t variant = (i / spec.num_classes) % 2;
        bool placed = false;
        for (int64_t tries = 0; tries < kMaxTries; ++tries) {
            auto seq = draw_sequence(rng, spec, label, variant);
            if (seen.insert(seq).second) {
                out.push_back({std::move(seq), label});
                placed = true;
                break;
            }
        }
        if (!placed) {
            fail(Errc::config, "task space too small to draw " + std::to_string(n) +
                                   " distinct sequences; increase vocab or seq_len");
        }
    }
    rng.shuffle(out);
    return out;
}

}  // namespace

TaskData generate_task(const TaskSpec& spec) {
    spec.validate();
    TaskData data;
    data.spec = spec;
    std::set<std::vector<int64_t>> seen;
    Rng train_rng(mix_seed(spec.seed, 0x7261));
    data.train = build_split(train_rng, spec, spec.train_n, seen);
    Rng eval_rng(mix_seed(spec.seed, 0x6576));
    data.eval = build_split(eval_rng, spec, spec.eval_n, seen);
    return data;
}

Batch tokenize_batch(const std::vector<std::vector<int64_t>>& sequences, int64_t pad_to) {
    if (sequences.empty()) fail(Errc::contract, "tokenize_batch: empty batch");
    if (pad_to < 1) fail(Errc::config, "tokenize_batch: pad_to must be >= 1");
    Batch batch;
    batch.rows = static_cast<int64_t>(sequences.size());
    batch.cols = pad_to;
    batch.ids.assign(static_cast<size_t>(batch.rows * pad_to), kPadId);
    batch.mask.assign(static_cast<size_t>(batch.rows * pad_to), 0);
    for (int64_t i = 0; i < batch.rows; ++i) {
        const auto& seq = sequences[static_cast<size_t>(i)];
        if (seq.empty()) fail(Errc::length, "tokenize_batch: empty sequence at row " + std::to_string(i));
        if (static_cast<int64_t>(seq.size()) > pad_to) {
            fail(Errc::length, "tokenize_batch: sequence of length " + std::to_string(seq.size()) +
                                   " exceeds pad_to " + std::to_string(pad_to));
        }
        for (size_t j = 0; j < seq.size(); ++j) {
            batch.ids[static_cast<size_t>(i * pad_to) + j] = seq[j];
            batch.mask[static_cast<size_t>(i * pad_to) + j] = 1;
        }
    }
    return batch;
}

std::vector<int64_t> parse_ids(const std::string& text) {
    std::vector<int64_t> out;
    std::istringstream is(text);
    int64_t v;
    while (is >> v) out.push_back(v);
    return out;
}

}  // namespace progtune
