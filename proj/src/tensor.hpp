#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace progtune {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense 64-bit float tensor participating in reverse-mode differentiation.
// Gradients accumulate (+=) across backward passes until zero_grad().
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched by backward
    bool requires_grad = false;
    bool leaf = true;
    std::string name;  // registry id for parameters, empty for activations

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    bool has_grad() const { return !grad.empty(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad = false,
                      std::string name = "");
TensorPtr zeros(Shape shape, bool requires_grad = false, std::string name = "");
TensorPtr full(Shape shape, double value, bool requires_grad = false, std::string name = "");
TensorPtr scalar(double value);

// Records one forward pass worth of operations for reverse-mode backward.
// Operands of node k were produced by nodes with index < k or are leaves, so a
// single reverse sweep is a valid topological traversal. One tape per
// training step, single-threaded.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // y[m,n] = a[m,k] . b[k,n]
    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
    // elementwise, identical shapes
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
    // y[m,n] = a[m,n] + bias[n] on every row
    TensorPtr add_bias(const TensorPtr& a, const TensorPtr& bias);
    TensorPtr scale(const TensorPtr& a, double c);
    // tanh-approximation GELU, elementwise
    TensorPtr gelu(const TensorPtr& x);
    // per-row normalization over the last dimension, then affine
    TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                         double eps);
    // softmax over each row of scores[q,k], restricted to key positions with
    // key_valid != 0; masked positions get exactly zero weight
    TensorPtr masked_row_softmax(const TensorPtr& scores, const std::vector<uint8_t>& key_valid);
    // mean over batch of -log softmax(logits[b,K])[target]
    TensorPtr softmax_cross_entropy(const TensorPtr& logits, const std::vector<int64_t>& targets);
    // row gather from table[V,d]; backward scatter-adds into table rows
    TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int64_t>& ids);
    // row gather from an activation matrix (same backward as embedding_lookup)
    TensorPtr gather_rows(const TensorPtr& x, const std::vector<int64_t>& rows);
    TensorPtr slice_rows(const TensorPtr& x, int64_t r0, int64_t r1);
    TensorPtr slice_cols(const TensorPtr& x, int64_t c0, int64_t c1);
    TensorPtr concat_rows(const std::vector<TensorPtr>& xs);
    TensorPtr concat_cols(const std::vector<TensorPtr>& xs);
    TensorPtr transpose(const TensorPtr& x);
    TensorPtr reshape(const TensorPtr& x, Shape shape);
    TensorPtr sum(const TensorPtr& x);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. Every
    // requires_grad leaf reachable from loss gets its grad accumulated;
    // unreachable leaves are left untouched (zero).
    void backward(const TensorPtr& loss);

    size_t node_count() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        TensorPtr out;
        std::function<void()> backward_fn;
    };

    TensorPtr make_out(Shape shape, std::vector<double> data, const std::vector<TensorPtr>& inputs);
    void push(const TensorPtr& out, std::function<void()> backward_fn);

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

// Finite-difference gradient checker; the engine's own oracle.
struct GradCheckReport {
    double max_rel_error = 0.0;
    // (parameter name, worst relative error over its entries); frozen
    // parameters are skipped and absent here
    std::vector<std::pair<std::string, double>> per_param;
};

// f builds a fresh graph on the given tape and returns a scalar loss. Checked
// parameters must be leaves used by f. Throws Errc::oracle if f is not
// deterministic (two evaluations disagree bitwise).
GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& f,
                           const std::vector<TensorPtr>& params, double h);

bool all_finite(const Tensor& t);

}  // namespace progtune
