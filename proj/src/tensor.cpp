#include "fair/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace fair {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

NodePtr make_leaf(Shape shape, std::vector<double> values) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return n;
}

// Records an op node; parents and the gradient rule are kept only when some
// input is tracked, so constant subgraphs cost nothing at backward time.
Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::vector<NodePtr> parents, std::function<void(const TensorNode&)> backward_fn) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->op = op;
    bool tracked = false;
    for (const auto& p : parents)
        if (p->tracked) tracked = true;
    if (tracked) {
        n->tracked = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

void check_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Accumulates `g` into node's grad if the node participates in the graph.
void accum(const NodePtr& n, const double* g, std::size_t len) {
    if (!n->tracked) return;
    n->ensure_grad();
    for (std::size_t i = 0; i < len; ++i) n->grad[i] += g[i];
}

// ---- raw matmul kernels (row-major, accumulate) ----

// c[m×n] += a[m×k]·b[k×n]
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m×n] += a[m×k]·b[n×k]ᵀ
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// c[k×n] += a[m×k]ᵀ·b[m×n]
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

// ---- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("from_values: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    return Tensor(make_leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    std::size_t n = shape_numel(shape);
    std::vector<double> vals(n);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : vals) v = dist(rng);
    return Tensor(make_leaf(std::move(shape), std::move(vals)));
}

std::size_t Tensor::rows() const {
    check_2d(*this, "rows");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    check_2d(*this, "cols");
    return node_->shape[1];
}

double Tensor::item() const {
    if (size() != 1)
        throw ContractError("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->values[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (flag) node_->tracked = true;
    return *this;
}

Tensor Tensor::clone() const {
    return Tensor(make_leaf(node_->shape, node_->values));
}

// ---- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    mm_nn_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    auto an = a.node(), bn = b.node();
    return make_op("matmul", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](const TensorNode& o) {
        if (an->tracked) {  // dA += dC·Bᵀ
            an->ensure_grad();
            mm_nt_acc(o.grad.data(), bn->values.data(), an->grad.data(), m, n, k);
        }
        if (bn->tracked) {  // dB += Aᵀ·dC
            bn->ensure_grad();
            mm_tn_acc(an->values.data(), o.grad.data(), bn->grad.data(), m, k, n);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul_nt");
    check_2d(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k)
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()) + "ᵀ");
    std::vector<double> out(m * n, 0.0);
    mm_nt_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    auto an = a.node(), bn = b.node();
    return make_op("matmul_nt", {m, n}, std::move(out), {an, bn},
                   [an, bn, m, k, n](const TensorNode& o) {
                       if (an->tracked) {  // dA += dC·B
                           an->ensure_grad();
                           mm_nn_acc(o.grad.data(), bn->values.data(), an->grad.data(), m, n, k);
                       }
                       if (bn->tracked) {  // dB += dCᵀ·A
                           bn->ensure_grad();
                           mm_tn_acc(o.grad.data(), an->values.data(), bn->grad.data(), m, n, k);
                       }
                   });
}

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    auto an = a.node();
    return make_op("transpose", {n, m}, std::move(out), {an}, [an, m, n](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += o.grad[j * m + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return make_op("add", a.shape(), std::move(out), {an, bn}, [an, bn](const TensorNode& o) {
        accum(an, o.grad.data(), o.grad.size());
        accum(bn, o.grad.data(), o.grad.size());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node(), bn = b.node();
    return make_op("sub", a.shape(), std::move(out), {an, bn}, [an, bn](const TensorNode& o) {
        accum(an, o.grad.data(), o.grad.size());
        if (bn->tracked) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node(), bn = b.node();
    return make_op("mul", a.shape(), std::move(out), {an, bn}, [an, bn](const TensorNode& o) {
        if (an->tracked) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                an->grad[i] += o.grad[i] * bn->values[i];
        }
        if (bn->tracked) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                bn->grad[i] += o.grad[i] * an->values[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto an = a.node();
    return make_op("scale", a.shape(), std::move(out), {an}, [an, c](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
    auto an = a.node();
    return make_op("add_scalar", a.shape(), std::move(out), {an}, [an](const TensorNode& o) {
        accum(an, o.grad.data(), o.grad.size());
    });
}

Tensor sub_col_vector(const Tensor& a, const Tensor& v) {
    check_2d(a, "sub_col_vector");
    if (v.ndim() != 1 || v.size() != a.rows())
        throw ShapeError("sub_col_vector: " + shape_str(a.shape()) + " vs column " +
                         shape_str(v.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto av = a.values(), vv = v.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] - vv[i];
    auto an = a.node(), vn = v.node();
    return make_op("sub_col_vector", {m, n}, std::move(out), {an, vn},
                   [an, vn, m, n](const TensorNode& o) {
                       accum(an, o.grad.data(), o.grad.size());
                       if (vn->tracked) {
                           vn->ensure_grad();
                           for (std::size_t i = 0; i < m; ++i) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j) s += o.grad[i * n + j];
                               vn->grad[i] -= s;
                           }
                       }
                   });
}

Tensor silu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-av[i]));
        out[i] = av[i] * s;
    }
    auto an = a.node();
    return make_op("silu", a.shape(), std::move(out), {an}, [an](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const double x = an->values[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            an->grad[i] += o.grad[i] * s * (1.0 + x * (1.0 - s));
        }
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    auto an = a.node();
    return make_op("relu", a.shape(), std::move(out), {an}, [an](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (an->values[i] > 0.0) an->grad[i] += o.grad[i];
    });
}

Tensor log_t(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(av[i]);
    auto an = a.node();
    return make_op("log", a.shape(), std::move(out), {an}, [an](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] / an->values[i];
    });
}

Tensor exp_t(const Tensor& a) {
    std::vector<double> out(a.size());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
    auto an = a.node();
    return make_op("exp", a.shape(), std::move(out), {an}, [an](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            an->grad[i] += o.grad[i] * std::exp(an->values[i]);
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node();
    return make_op("sum", {1}, {s}, {an}, [an](const TensorNode& o) {
        if (!an->tracked) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
    });
}

Tensor softmax_rows(const Tensor& x, const Tensor& mask) {
    check_2d(x, "softmax_rows");
    const bool masked = mask.defined();
    if (masked) check_same_shape(x, mask, "softmax_rows(mask)");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n, 0.0);
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (masked && mask.values()[i * n + j] == 0.0) continue;
            mx = std::max(mx, xv[i * n + j]);
        }
        if (mx == -std::numeric_limits<double>::infinity())
            throw ContractError("softmax_rows: fully masked row " + std::to_string(i));
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (masked && mask.values()[i * n + j] == 0.0) continue;
            const double e = std::exp(xv[i * n + j] - mx);
            out[i * n + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    auto xn = x.node();
    return make_op("softmax_rows", {m, n}, std::move(out), {xn}, [xn, m, n](const TensorNode& o) {
        if (!xn->tracked) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.values[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
                const double s = o.values[i * n + j];
                xn->grad[i * n + j] += s * (o.grad[i * n + j] - dot);
            }
        }
    });
}

Tensor softmax_cross_entropy_rows(const Tensor& logits, const std::vector<std::int64_t>& targets) {
    check_2d(logits, "softmax_cross_entropy_rows");
    const std::size_t m = logits.rows(), n = logits.cols();
    if (targets.size() != m)
        throw ContractError("softmax_cross_entropy_rows: " + std::to_string(targets.size()) +
                            " targets for " + std::to_string(m) + " rows");
    for (std::size_t i = 0; i < m; ++i)
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n)
            throw ContractError("softmax_cross_entropy_rows: target " + std::to_string(targets[i]) +
                                " out of range [0," + std::to_string(n) + ") at row " +
                                std::to_string(i));
    const auto lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double mx = lv[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, lv[i * n + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(lv[i * n + j] - mx);
        const double lse = mx + std::log(denom);
        total += lse - lv[i * n + static_cast<std::size_t>(targets[i])];
    }
    total /= static_cast<double>(m);
    auto ln = logits.node();
    return make_op("softmax_cross_entropy_rows", {1}, {total}, {ln},
                   [ln, targets, m, n](const TensorNode& o) {
                       if (!ln->tracked) return;
                       ln->ensure_grad();
                       const double g = o.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i) {
                           double mx = ln->values[i * n];
                           for (std::size_t j = 1; j < n; ++j)
                               mx = std::max(mx, ln->values[i * n + j]);
                           double denom = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                               denom += std::exp(ln->values[i * n + j] - mx);
                           for (std::size_t j = 0; j < n; ++j) {
                               const double p = std::exp(ln->values[i * n + j] - mx) / denom;
                               ln->grad[i * n + j] += g * p;
                           }
                           ln->grad[i * n + static_cast<std::size_t>(targets[i])] -= g;
                       }
                   });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    check_2d(x, "rms_norm");
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.size() != n)
        throw ShapeError("rms_norm: gain " + shape_str(gain.shape()) + " does not match row width " +
                         std::to_string(n));
    std::vector<double> out(m * n);
    std::vector<double> inv_rms(m);
    const auto xv = x.values(), gv = gain.values();
    for (std::size_t i = 0; i < m; ++i) {
        double ms = 0.0;
        for (std::size_t j = 0; j < n; ++j) ms += xv[i * n + j] * xv[i * n + j];
        ms /= static_cast<double>(n);
        inv_rms[i] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = gv[j] * xv[i * n + j] * inv_rms[i];
    }
    auto xn = x.node(), gn = gain.node();
    return make_op("rms_norm", {m, n}, std::move(out), {xn, gn},
                   [xn, gn, inv_rms, m, n](const TensorNode& o) {
                       for (std::size_t i = 0; i < m; ++i) {
                           const double s = inv_rms[i];
                           if (xn->tracked) {
                               xn->ensure_grad();
                               double dot = 0.0;  // Σ_k dy_k·g_k·x_k
                               for (std::size_t j = 0; j < n; ++j)
                                   dot += o.grad[i * n + j] * gn->values[j] * xn->values[i * n + j];
                               const double c = s * s * s * dot / static_cast<double>(n);
                               for (std::size_t j = 0; j < n; ++j)
                                   xn->grad[i * n + j] += s * gn->values[j] * o.grad[i * n + j] -
                                                          c * xn->values[i * n + j];
                           }
                           if (gn->tracked) {
                               gn->ensure_grad();
                               for (std::size_t j = 0; j < n; ++j)
                                   gn->grad[j] += o.grad[i * n + j] * xn->values[i * n + j] * s;
                           }
                       }
                   });
}

Tensor l1_normalize_rows_signed(const Tensor& x, double eps) {
    check_2d(x, "l1_normalize_rows_signed");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    std::vector<double> denom(m);
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::abs(xv[i * n + j]);
        denom[i] = std::max(s, eps);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / denom[i];
    }
    auto xn = x.node();
    return make_op("l1_normalize_rows_signed", {m, n}, std::move(out), {xn},
                   [xn, denom, eps, m, n](const TensorNode& o) {
                       if (!xn->tracked) return;
                       xn->ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                           const double d = denom[i];
                           if (d <= eps) {  // clamped branch: y = x/eps
                               for (std::size_t j = 0; j < n; ++j)
                                   xn->grad[i * n + j] += o.grad[i * n + j] / d;
                               continue;
                           }
                           double dot = 0.0;  // Σ_k dy_k·y_k
                           for (std::size_t j = 0; j < n; ++j)
                               dot += o.grad[i * n + j] * o.values[i * n + j];
                           for (std::size_t j = 0; j < n; ++j) {
                               const double x_ij = xn->values[i * n + j];
                               const double sgn = x_ij > 0.0 ? 1.0 : (x_ij < 0.0 ? -1.0 : 0.0);
                               xn->grad[i * n + j] += (o.grad[i * n + j] - sgn * dot) / d;
                           }
                       }
                   });
}

std::size_t count_degenerate_rows(const Tensor& x, double eps) {
    if (x.ndim() != 2) return 0;
    const std::size_t m = x.rows(), n = x.cols();
    const auto xv = x.values();
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::abs(xv[i * n + j]);
        if (s <= eps) ++count;
    }
    return count;
}

Tensor l2_normalize_rows(const Tensor& x) {
    check_2d(x, "l2_normalize_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    const auto xv = x.values();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j] * xv[i * n + j];
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
    }
    auto xn = x.node();
    return make_op("l2_normalize_rows", {m, n}, std::move(out), {xn},
                   [xn, norms, m, n](const TensorNode& o) {
                       if (!xn->tracked) return;
                       xn->ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                               dot += o.grad[i * n + j] * o.values[i * n + j];
                           for (std::size_t j = 0; j < n; ++j)
                               xn->grad[i * n + j] +=
                                   (o.grad[i * n + j] - dot * o.values[i * n + j]) / norms[i];
                       }
                   });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cosine_rows");
    check_2d(a, "cosine_rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m);
    std::vector<double> na(m), nb(m);
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        double sa = 0.0, sb = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sa += av[i * n + j] * av[i * n + j];
            sb += bv[i * n + j] * bv[i * n + j];
            dot += av[i * n + j] * bv[i * n + j];
        }
        na[i] = std::sqrt(sa);
        nb[i] = std::sqrt(sb);
        if (na[i] == 0.0 || nb[i] == 0.0)
            throw NumericError("cosine_rows: zero-norm vector at row " + std::to_string(i));
        out[i] = dot / (na[i] * nb[i]);
    }
    auto an = a.node(), bn = b.node();
    return make_op("cosine_rows", {m}, std::move(out), {an, bn},
                   [an, bn, na, nb, m, n](const TensorNode& o) {
                       for (std::size_t i = 0; i < m; ++i) {
                           const double g = o.grad[i];
                           if (g == 0.0) continue;
                           const double c = o.values[i];
                           if (an->tracked) {
                               an->ensure_grad();
                               for (std::size_t j = 0; j < n; ++j)
                                   an->grad[i * n + j] +=
                                       g * (bn->values[i * n + j] / (na[i] * nb[i]) -
                                            c * an->values[i * n + j] / (na[i] * na[i]));
                           }
                           if (bn->tracked) {
                               bn->ensure_grad();
                               for (std::size_t j = 0; j < n; ++j)
                                   bn->grad[i * n + j] +=
                                       g * (an->values[i * n + j] / (na[i] * nb[i]) -
                                            c * bn->values[i * n + j] / (nb[i] * nb[i]));
                           }
                       }
                   });
}

namespace {

Tensor mean_pool_rows_impl(const Tensor& x, std::vector<std::size_t> rows_in) {
    check_2d(x, "mean_pool_rows");
    const std::size_t n = x.cols();
    if (rows_in.empty()) throw ContractError("mean_pool_rows: no rows to pool");
    std::vector<double> out(n, 0.0);
    const auto xv = x.values();
    for (auto r : rows_in)
        for (std::size_t j = 0; j < n; ++j) out[j] += xv[r * n + j];
    const double inv = 1.0 / static_cast<double>(rows_in.size());
    for (auto& v : out) v *= inv;
    auto xn = x.node();
    return make_op("mean_pool_rows", {n}, std::move(out), {xn},
                   [xn, rows_in, n, inv](const TensorNode& o) {
                       if (!xn->tracked) return;
                       xn->ensure_grad();
                       for (auto r : rows_in)
                           for (std::size_t j = 0; j < n; ++j)
                               xn->grad[r * n + j] += o.grad[j] * inv;
                   });
}

}  // namespace

Tensor mean_pool_rows(const Tensor& x) {
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), 0);
    return mean_pool_rows_impl(x, std::move(all));
}

Tensor mean_pool_rows(const Tensor& x, const std::vector<bool>& keep) {
    if (keep.size() != x.rows())
        throw ShapeError("mean_pool_rows: mask length " + std::to_string(keep.size()) +
                         " vs rows " + std::to_string(x.rows()));
    std::vector<std::size_t> rows_in;
    for (std::size_t r = 0; r < keep.size(); ++r)
        if (keep[r]) rows_in.push_back(r);
    return mean_pool_rows_impl(x, std::move(rows_in));
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input");
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        check_2d(p, "concat_cols");
        if (p.rows() != m)
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        total += p.cols();
    }
    std::vector<double> out(m * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        const auto pv = p.values();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = pv[i * w + j];
        off += w;
    }
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.cols());
    }
    return make_op("concat_cols", {m, total}, std::move(out), nodes,
                   [nodes, widths, m, total](const TensorNode& o) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                           const std::size_t w = widths[k];
                           if (nodes[k]->tracked) {
                               nodes[k]->ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < w; ++j)
                                       nodes[k]->grad[i * w + j] += o.grad[i * total + off + j];
                           }
                           off += w;
                       }
                   });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input");
    // 1-D parts are treated as single rows.
    auto width = [](const Tensor& t) { return t.ndim() == 1 ? t.size() : t.cols(); };
    auto height = [](const Tensor& t) { return t.ndim() == 1 ? std::size_t{1} : t.rows(); };
    const std::size_t n = width(parts[0]);
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (width(p) != n)
            throw ShapeError("concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        total += height(p);
    }
    std::vector<double> out;
    out.reserve(total * n);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> heights;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        heights.push_back(height(p));
    }
    return make_op("concat_rows", {total, n}, std::move(out), nodes,
                   [nodes, heights, n](const TensorNode& o) {
                       std::size_t roff = 0;
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                           const std::size_t h = heights[k];
                           if (nodes[k]->tracked) {
                               nodes[k]->ensure_grad();
                               for (std::size_t i = 0; i < h * n; ++i)
                                   nodes[k]->grad[i] += o.grad[roff * n + i];
                           }
                           roff += h;
                       }
                   });
}

Tensor select_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
    check_2d(x, "select_rows");
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> out(indices.size() * n, 0.0);
    const auto xv = x.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto idx = indices[i];
        if (idx < 0) continue;  // zero row
        if (static_cast<std::size_t>(idx) >= m)
            throw ShapeError("select_rows: index " + std::to_string(idx) + " out of " +
                             std::to_string(m) + " rows");
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[static_cast<std::size_t>(idx) * n + j];
    }
    auto xn = x.node();
    return make_op("select_rows", {indices.size(), n}, std::move(out), {xn},
                   [xn, indices, n](const TensorNode& o) {
                       if (!xn->tracked) return;
                       xn->ensure_grad();
                       for (std::size_t i = 0; i < indices.size(); ++i) {
                           const auto idx = indices[i];
                           if (idx < 0) continue;
                           for (std::size_t j = 0; j < n; ++j)
                               xn->grad[static_cast<std::size_t>(idx) * n + j] += o.grad[i * n + j];
                       }
                   });
}

// ---- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward: loss must be a scalar tensor");
    auto root = loss.node();

    // Post-order DFS (iterative) over tracked nodes.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next].get();
            ++next;
            if (p->tracked && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Intermediate grads are per-sweep scratch; requires_grad leaves keep
    // accumulating across sweeps until zero_grad().
    for (auto* node : topo)
        if (!node->requires_grad) node->grad.assign(node->values.size(), 0.0);
    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

// ---- optimizer -----------------------------------------------------------------

void AdamState::init(std::span<const Tensor> params) {
    m.clear();
    v.clear();
    step = 0;
    for (const auto& p : params) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
    }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size())
        throw ContractError("adam_step: state holds " + std::to_string(state.m.size()) +
                            " param slots, got " + std::to_string(params.size()));
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.has_grad()) continue;  // untouched parameter
        auto g = p.grad();
        auto vals = p.values_mut();
        auto& mk = state.m[k];
        auto& vk = state.v[k];
        if (mk.size() != vals.size())
            throw ContractError("adam_step: state shape mismatch at param " + std::to_string(k));
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw NumericError("adam_step: non-finite gradient at param " + std::to_string(k) +
                                   " index " + std::to_string(i));
            mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
            vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void zero_grads(std::span<Tensor> params) {
    for (auto& p : params) p.zero_grad();
}

// ---- gradient checking -----------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor work = x.clone();
    work.set_requires_grad(true);
    Tensor y = f(work);
    if (y.size() != 1) throw ContractError("finite_diff_check: f must return a scalar");
    backward(y);
    std::vector<double> analytic(work.size(), 0.0);
    if (work.has_grad()) {
        auto g = work.grad();
        analytic.assign(g.begin(), g.end());
    }

    double max_err = 0.0;
    auto vals = work.values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + h;
        const double fp = f(work).item();
        vals[i] = orig - h;
        const double fm = f(work).item();
        vals[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace fair
