#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fair/errors.hpp"

namespace fair {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

// One recorded operation of the compute graph. Nodes form a DAG through
// `parents`; backward() materializes the reverse topological order and calls
// each node's gradient rule. Children hold owning references to parents, so
// the graph lives exactly as long as its outputs.
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until populated
    bool requires_grad = false;
    bool tracked = false;  // requires_grad, or depends on a tracked tensor
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const TensorNode&)> backward_fn;
    const char* op = "leaf";

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major f64 tensor with reverse-mode autodiff. Value-semantic
// handle: copies share the underlying node; clone() deep-copies.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_values(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t size() const { return node_->values.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const { return node_->values; }
    std::span<double> values_mut() { return node_->values; }
    double item() const;
    double at(std::size_t i) const { return node_->values[i]; }
    double at(std::size_t i, std::size_t j) const { return node_->values[i * cols() + j]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> grad_mut() { return node_->grad; }
    void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

    // Deep copy, detached from the graph (no parents, requires_grad off).
    Tensor clone() const;

    const char* op_name() const { return node_->op; }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// ---- graph ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);          // [m×k]·[k×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);       // [m×k]·[n×k]ᵀ
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);             // same shape
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sub_col_vector(const Tensor& a, const Tensor& v);  // a[i][j] − v[i]

Tensor silu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor sum(const Tensor& a);  // scalar

// Row-wise softmax with optional {0,1} mask; masked entries are exactly 0.
// A fully masked row raises ContractError.
Tensor softmax_rows(const Tensor& x, const Tensor& mask = Tensor());

// Mean over batch rows of −log softmax(logits_r)[target_r]; numerically
// stable via logsumexp.
Tensor softmax_cross_entropy_rows(const Tensor& logits, const std::vector<std::int64_t>& targets);

// Row-wise RMS normalization with learnable gain: y_rj = gain_j·x_rj/rms(x_r).
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// Row-wise signed L1 normalization: y_r = x_r / max(Σ_j |x_rj|, eps).
// All-zero rows map to all-zero rows.
Tensor l1_normalize_rows_signed(const Tensor& x, double eps = 1e-8);
std::size_t count_degenerate_rows(const Tensor& x, double eps = 1e-8);

Tensor l2_normalize_rows(const Tensor& x);
Tensor cosine_rows(const Tensor& a, const Tensor& b);     // [m×n],[m×n] → [m]

Tensor mean_pool_rows(const Tensor& x);                                  // [m×n] → [n]
Tensor mean_pool_rows(const Tensor& x, const std::vector<bool>& keep);   // masked rows excluded

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// Gathers rows; index −1 yields a zero row (and no gradient flow).
Tensor select_rows(const Tensor& x, const std::vector<std::int64_t>& indices);
inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices) {
    return select_rows(table, indices);
}

// ---- backward --------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients of requires_grad tensors
// accumulate across calls; intermediates are reset per sweep. zero_grad()
// resets a leaf explicitly.
void backward(const Tensor& loss);

// ---- optimizer -------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;

    void init(std::span<const Tensor> params);
    bool initialized() const { return !m.empty(); }
};

// Standard bias-corrected Adam update over `params` using their grads.
// Raises NumericError if any gradient is non-finite.
void adam_step(std::span<Tensor> params, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

void zero_grads(std::span<Tensor> params);

// ---- gradient checking -----------------------------------------------------

// Central-difference check of backward() through `f` at `x`. Returns the max
// over coordinates of |analytic − numeric| / max(1, |analytic|).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

}  // namespace fair
