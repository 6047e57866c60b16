#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace progtune {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void check_rank(const TensorPtr& t, size_t rank, const char* op) {
    if (t->shape.size() != rank) {
        fail(Errc::shape, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                              shape_str(t->shape));
    }
}

}  // namespace

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

TensorPtr make_tensor(Shape shape, std::vector<double> values, bool requires_grad,
                      std::string name) {
    for (int64_t d : shape) {
        if (d <= 0) fail(Errc::shape, "dimension sizes must be positive, got " + shape_str(shape));
    }
    if (numel(shape) != static_cast<int64_t>(values.size())) {
        fail(Errc::shape, "data length " + std::to_string(values.size()) + " does not match shape " +
                              shape_str(shape));
    }
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    t->name = std::move(name);
    return t;
}

TensorPtr zeros(Shape shape, bool requires_grad, std::string name) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
    return make_tensor(std::move(shape), std::move(v), requires_grad, std::move(name));
}

TensorPtr full(Shape shape, double value, bool requires_grad, std::string name) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), value);
    return make_tensor(std::move(shape), std::move(v), requires_grad, std::move(name));
}

TensorPtr scalar(double value) { return make_tensor({1}, {value}); }

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

TensorPtr Tape::make_out(Shape shape, std::vector<double> data,
                         const std::vector<TensorPtr>& inputs) {
    auto out = std::make_shared<Tensor>();
    out->shape = std::move(shape);
    out->data = std::move(data);
    out->leaf = false;
    if (grad_enabled_) {
        for (const auto& in : inputs) {
            if (in->requires_grad) {
                out->requires_grad = true;
                break;
            }
        }
    }
    return out;
}

void Tape::push(const TensorPtr& out, std::function<void()> backward_fn) {
    // Nodes whose output cannot require grad never need a backward rule.
    if (out->requires_grad) nodes_.push_back({out, std::move(backward_fn)});
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
    check_rank(a, 2, "matmul");
    check_rank(b, 2, "matmul");
    const int64_t m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
    if (k != k2) {
        fail(Errc::shape,
             "matmul: inner dimensions disagree: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<double> y(static_cast<size_t>(m * n), 0.0);
    const double* A = a->data.data();
    const double* B = b->data.data();
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = B + p * n;
            double* yrow = y.data() + i * n;
            for (int64_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
        }
    }
    auto out = make_out({m, n}, std::move(y), {a, b});
    push(out, [a, b, out, m, k, n]() {
        const double* g = out->grad.data();
        if (a->requires_grad) {
            a->ensure_grad();
            // dA = g . B^T
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g + i * n;
                    const double* brow = b->data.data() + p * n;
                    for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    a->grad[i * k + p] += acc;
                }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            // dB = A^T . g
            for (int64_t p = 0; p < k; ++p)
                for (int64_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < m; ++i) acc += a->data[i * k + p] * g[i * n + j];
                    b->grad[p * n + j] += acc;
                }
        }
    });
    return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        fail(Errc::shape, "add: shapes differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<double> y(a->data.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] + b->data[i];
    auto out = make_out(a->shape, std::move(y), {a, b});
    push(out, [a, b, out]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        fail(Errc::shape, "mul: shapes differ: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    std::vector<double> y(a->data.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] * b->data[i];
    auto out = make_out(a->shape, std::move(y), {a, b});
    push(out, [a, b, out]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
        }
    });
    return out;
}

TensorPtr Tape::add_bias(const TensorPtr& a, const TensorPtr& bias) {
    check_rank(a, 2, "add_bias");
    check_rank(bias, 1, "add_bias");
    const int64_t m = a->shape[0], n = a->shape[1];
    if (bias->shape[0] != n) {
        fail(Errc::shape,
             "add_bias: bias " + shape_str(bias->shape) + " does not match " + shape_str(a->shape));
    }
    std::vector<double> y(a->data.size());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) y[i * n + j] = a->data[i * n + j] + bias->data[j];
    auto out = make_out(a->shape, std::move(y), {a, bias});
    push(out, [a, bias, out, m, n]() {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        }
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) bias->grad[j] += out->grad[i * n + j];
        }
    });
    return out;
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
    std::vector<double> y(a->data.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] * c;
    auto out = make_out(a->shape, std::move(y), {a});
    push(out, [a, out, c]() {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += c * out->grad[i];
    });
    return out;
}

TensorPtr Tape::gelu(const TensorPtr& x) {
    std::vector<double> y(x->data.size());
    for (size_t i = 0; i < y.size(); ++i) {
        const double v = x->data[i];
        const double u = kGeluC * (v + kGeluA * v * v * v);
        y[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    auto out = make_out(x->shape, std::move(y), {x});
    push(out, [x, out]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) {
            const double v = x->data[i];
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double t = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            x->grad[i] += out->grad[i] * dy;
        }
    });
    return out;
}

TensorPtr Tape::layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                           double eps) {
    check_rank(x, 2, "layer_norm");
    check_rank(gamma, 1, "layer_norm");
    check_rank(beta, 1, "layer_norm");
    const int64_t m = x->shape[0], d = x->shape[1];
    if (gamma->shape[0] != d || beta->shape[0] != d) {
        fail(Errc::shape, "layer_norm: affine params " + shape_str(gamma->shape) + "/" +
                              shape_str(beta->shape) + " do not match last dim of " +
                              shape_str(x->shape));
    }
    if (!(eps > 0.0)) fail(Errc::invalid_argument, "layer_norm: eps must be > 0");

    // cache normalized rows and inverse stddev for backward
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
    std::vector<double> y(x->data.size());
    for (int64_t i = 0; i < m; ++i) {
        const double* row = x->data.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double iv = 1.0 / std::sqrt(var + eps);
        (*inv)[static_cast<size_t>(i)] = iv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * iv;
            (*xhat)[i * d + j] = xh;
            y[i * d + j] = gamma->data[j] * xh + beta->data[j];
        }
    }
    auto out = make_out(x->shape, std::move(y), {x, gamma, beta});
    push(out, [x, gamma, beta, out, xhat, inv, m, d]() {
        const double* g = out->grad.data();
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < d; ++j) gamma->grad[j] += g[i * d + j] * (*xhat)[i * d + j];
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < d; ++j) beta->grad[j] += g[i * d + j];
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (int64_t i = 0; i < m; ++i) {
                double mean_q = 0.0, mean_qx = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double q = g[i * d + j] * gamma->data[j];
                    mean_q += q;
                    mean_qx += q * (*xhat)[i * d + j];
                }
                mean_q /= static_cast<double>(d);
                mean_qx /= static_cast<double>(d);
                const double iv = (*inv)[static_cast<size_t>(i)];
                for (int64_t j = 0; j < d; ++j) {
                    const double q = g[i * d + j] * gamma->data[j];
                    x->grad[i * d + j] += iv * (q - mean_q - (*xhat)[i * d + j] * mean_qx);
                }
            }
        }
    });
    return out;
}

TensorPtr Tape::masked_row_softmax(const TensorPtr& scores, const std::vector<uint8_t>& key_valid) {
    check_rank(scores, 2, "masked_row_softmax");
    const int64_t q = scores->shape[0], k = scores->shape[1];
    if (static_cast<int64_t>(key_valid.size()) != k) {
        fail(Errc::shape, "masked_row_softmax: mask length " + std::to_string(key_valid.size()) +
                              " does not match key count " + std::to_string(k));
    }
    bool any_valid = false;
    for (uint8_t v : key_valid) any_valid |= (v != 0);
    if (!any_valid) fail(Errc::contract, "masked_row_softmax: every key position is masked");

    std::vector<double> y(scores->data.size(), 0.0);
    for (int64_t i = 0; i < q; ++i) {
        const double* row = scores->data.data() + i * k;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < k; ++j)
            if (key_valid[static_cast<size_t>(j)] && row[j] > mx) mx = row[j];
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            if (!key_valid[static_cast<size_t>(j)]) continue;
            const double e = std::exp(row[j] - mx);
            y[i * k + j] = e;
            denom += e;
        }
        for (int64_t j = 0; j < k; ++j) y[i * k + j] /= denom;
    }
    auto out = make_out(scores->shape, std::move(y), {scores});
    auto mask = key_valid;
    push(out, [scores, out, mask, q, k]() {
        if (!scores->requires_grad) return;
        scores->ensure_grad();
        for (int64_t i = 0; i < q; ++i) {
            const double* yrow = out->data.data() + i * k;
            const double* grow = out->grad.data() + i * k;
            double dot = 0.0;
            for (int64_t j = 0; j < k; ++j) dot += grow[j] * yrow[j];
            for (int64_t j = 0; j < k; ++j) {
                if (!mask[static_cast<size_t>(j)]) continue;
                scores->grad[i * k + j] += yrow[j] * (grow[j] - dot);
            }
        }
    });
    return out;
}

TensorPtr Tape::softmax_cross_entropy(const TensorPtr& logits, const std::vector<int64_t>& targets) {
    check_rank(logits, 2, "softmax_cross_entropy");
    const int64_t b = logits->shape[0], K = logits->shape[1];
    if (static_cast<int64_t>(targets.size()) != b) {
        fail(Errc::shape, "softmax_cross_entropy: got " + std::to_string(targets.size()) +
                              " targets for batch " + std::to_string(b));
    }
    for (int64_t t : targets) {
        if (t < 0 || t >= K) {
            fail(Errc::index, "softmax_cross_entropy: target " + std::to_string(t) +
                                  " outside [0, " + std::to_string(K) + ")");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(logits->data.size());
    double loss = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        const double* row = logits->data.data() + i * K;
        double mx = row[0];
        for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < K; ++j) {
            const double e = std::exp(row[j] - mx);
            (*probs)[i * K + j] = e;
            denom += e;
        }
        for (int64_t j = 0; j < K; ++j) (*probs)[i * K + j] /= denom;
        loss -= std::log((*probs)[i * K + targets[static_cast<size_t>(i)]]);
    }
    loss /= static_cast<double>(b);
    auto out = make_out({1}, {loss}, {logits});
    auto tg = targets;
    push(out, [logits, out, probs, tg, b, K]() {
        if (!logits->requires_grad) return;
        logits->ensure_grad();
        const double g = out->grad[0] / static_cast<double>(b);
        for (int64_t i = 0; i < b; ++i)
            for (int64_t j = 0; j < K; ++j) {
                const double onehot = (tg[static_cast<size_t>(i)] == j) ? 1.0 : 0.0;
                logits->grad[i * K + j] += g * ((*probs)[i * K + j] - onehot);
            }
    });
    return out;
}

TensorPtr Tape::embedding_lookup(const TensorPtr& table, const std::vector<int64_t>& ids) {
    check_rank(table, 2, "embedding_lookup");
    const int64_t V = table->shape[0], d = table->shape[1];
    for (int64_t id : ids) {
        if (id < 0 || id >= V) {
            fail(Errc::index,
                 "embedding_lookup: id " + std::to_string(id) + " outside [0, " + std::to_string(V) + ")");
        }
    }
    const int64_t n = static_cast<int64_t>(ids.size());
    std::vector<double> y(static_cast<size_t>(n * d));
    for (int64_t i = 0; i < n; ++i) {
        std::memcpy(y.data() + i * d, table->data.data() + ids[static_cast<size_t>(i)] * d,
                    static_cast<size_t>(d) * sizeof(double));
    }
    auto out = make_out({n, d}, std::move(y), {table});
    auto idv = ids;
    push(out, [table, out, idv, d]() {
        if (!table->requires_grad) return;
        table->ensure_grad();
        for (size_t i = 0; i < idv.size(); ++i) {
            const double* grow = out->grad.data() + static_cast<int64_t>(i) * d;
            double* trow = table->grad.data() + idv[i] * d;
            for (int64_t j = 0; j < d; ++j) trow[j] += grow[j];
        }
    });
    return out;
}

TensorPtr Tape::gather_rows(const TensorPtr& x, const std::vector<int64_t>& rows) {
    return embedding_lookup(x, rows);
}

TensorPtr Tape::slice_rows(const TensorPtr& x, int64_t r0, int64_t r1) {
    check_rank(x, 2, "slice_rows");
    const int64_t m = x->shape[0], n = x->shape[1];
    if (r0 < 0 || r1 > m || r0 >= r1) {
        fail(Errc::index, "slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                              ") invalid for " + shape_str(x->shape));
    }
    std::vector<double> y(x->data.begin() + r0 * n, x->data.begin() + r1 * n);
    auto out = make_out({r1 - r0, n}, std::move(y), {x});
    push(out, [x, out, r0, n]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) x->grad[static_cast<size_t>(r0 * n) + i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::slice_cols(const TensorPtr& x, int64_t c0, int64_t c1) {
    check_rank(x, 2, "slice_cols");
    const int64_t m = x->shape[0], n = x->shape[1];
    if (c0 < 0 || c1 > n || c0 >= c1) {
        fail(Errc::index, "slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                              ") invalid for " + shape_str(x->shape));
    }
    const int64_t w = c1 - c0;
    std::vector<double> y(static_cast<size_t>(m * w));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j) y[i * w + j] = x->data[i * n + c0 + j];
    auto out = make_out({m, w}, std::move(y), {x});
    push(out, [x, out, c0, m, n, w]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) x->grad[i * n + c0 + j] += out->grad[i * w + j];
    });
    return out;
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) fail(Errc::invalid_argument, "concat_rows: empty input list");
    const int64_t n = xs[0]->shape[1];
    int64_t rows = 0;
    for (const auto& x : xs) {
        check_rank(x, 2, "concat_rows");
        if (x->shape[1] != n) {
            fail(Errc::shape, "concat_rows: column count mismatch: " + shape_str(x->shape));
        }
        rows += x->shape[0];
    }
    std::vector<double> y;
    y.reserve(static_cast<size_t>(rows * n));
    for (const auto& x : xs) y.insert(y.end(), x->data.begin(), x->data.end());
    auto out = make_out({rows, n}, std::move(y), xs);
    auto parts = xs;
    push(out, [parts, out]() {
        size_t off = 0;
        for (const auto& x : parts) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[off + i];
            }
            off += x->data.size();
        }
    });
    return out;
}

TensorPtr Tape::concat_cols(const std::vector<TensorPtr>& xs) {
    if (xs.empty()) fail(Errc::invalid_argument, "concat_cols: empty input list");
    const int64_t m = xs[0]->shape[0];
    int64_t cols = 0;
    for (const auto& x : xs) {
        check_rank(x, 2, "concat_cols");
        if (x->shape[0] != m) {
            fail(Errc::shape, "concat_cols: row count mismatch: " + shape_str(x->shape));
        }
        cols += x->shape[1];
    }
    std::vector<double> y(static_cast<size_t>(m * cols));
    int64_t off = 0;
    for (const auto& x : xs) {
        const int64_t w = x->shape[1];
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) y[i * cols + off + j] = x->data[i * w + j];
        off += w;
    }
    auto out = make_out({m, cols}, std::move(y), xs);
    auto parts = xs;
    push(out, [parts, out, m, cols]() {
        int64_t off = 0;
        for (const auto& x : parts) {
            const int64_t w = x->shape[1];
            if (x->requires_grad) {
                x->ensure_grad();
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < w; ++j) x->grad[i * w + j] += out->grad[i * cols + off + j];
            }
            off += w;
        }
    });
    return out;
}

TensorPtr Tape::transpose(const TensorPtr& x) {
    check_rank(x, 2, "transpose");
    const int64_t m = x->shape[0], n = x->shape[1];
    std::vector<double> y(x->data.size());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) y[j * m + i] = x->data[i * n + j];
    auto out = make_out({n, m}, std::move(y), {x});
    push(out, [x, out, m, n]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) x->grad[i * n + j] += out->grad[j * m + i];
    });
    return out;
}

TensorPtr Tape::reshape(const TensorPtr& x, Shape shape) {
    if (numel(shape) != x->size()) {
        fail(Errc::shape,
             "reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(shape));
    }
    auto out = make_out(std::move(shape), x->data, {x});
    push(out, [x, out]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::sum(const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->data) s += v;
    auto out = make_out({1}, {s}, {x});
    push(out, [x, out]() {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double g = out->grad[0];
        for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    });
    return out;
}

void Tape::backward(const TensorPtr& loss) {
    if (!grad_enabled_) fail(Errc::state, "backward: tape was created with grads disabled");
    if (loss->size() != 1) {
        fail(Errc::contract, "backward: loss must be scalar, got " + shape_str(loss->shape));
    }
    if (!loss->requires_grad) {
        // Nothing upstream requires grad; all leaf grads stay zero.
        return;
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->out->has_grad()) it->backward_fn();
    }
}

GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& f,
                           const std::vector<TensorPtr>& params, double h) {
    if (!(h > 0.0)) fail(Errc::invalid_argument, "grad_check: h must be > 0");

    auto eval = [&f]() {
        Tape tape(false);
        TensorPtr loss = f(tape);
        if (loss->size() != 1) fail(Errc::contract, "grad_check: f must return a scalar");
        return loss->data[0];
    };

    // Determinism probe: a stochastic f would invalidate the central differences.
    const double probe1 = eval();
    const double probe2 = eval();
    if (std::memcmp(&probe1, &probe2, sizeof(double)) != 0) {
        fail(Errc::oracle, "grad_check: f is not deterministic across evaluations");
    }

    // Analytic gradients on a fresh tape.
    std::vector<std::vector<double>> saved;
    {
        for (const auto& p : params) p->zero_grad();
        Tape tape;
        TensorPtr loss = f(tape);
        tape.backward(loss);
        for (const auto& p : params) {
            if (!p->requires_grad) {
                saved.emplace_back();
                continue;
            }
            p->ensure_grad();
            saved.push_back(p->grad);
            p->zero_grad();
        }
    }

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& p = params[pi];
        if (!p->requires_grad) continue;  // frozen: skipped, absent from the report
        double worst = 0.0;
        for (size_t i = 0; i < p->data.size(); ++i) {
            const double keep = p->data[i];
            p->data[i] = keep + h;
            const double hi = eval();
            p->data[i] = keep - h;
            const double lo = eval();
            p->data[i] = keep;
            const double cd = (hi - lo) / (2.0 * h);
            const double an = saved[pi][i];
            const double rel = std::fabs(an - cd) / std::max({std::fabs(an), std::fabs(cd), 1e-8});
            worst = std::max(worst, rel);
        }
        report.per_param.emplace_back(p->name, worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    return report;
}

}  // namespace progtune
