#pragma once

// Reverse-mode automatic differentiation over dense row-major arrays.
// The op set is exactly what the two network paths need; every op records
// a backward closure and gradients accumulate additively across fan-out.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mbs/util.hpp"

namespace mbs {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // lazily sized on backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // accumulate self.grad into parents
    const char* label = "";

    std::size_t numel() const { return val.size(); }
    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), T(0));
    }
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), requires_grad);
    }
    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        std::fill(t.node_->val.begin(), t.node_->val.end(), value);
        return t;
    }
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        require(values.size() == shape_numel(shape),
                msg("tensor: value count ", values.size(), " does not match shape ", shape_str(shape)));
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->val = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }
    static Tensor scalar_of(T value) { return from({1}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node()->shape; }
    int rank() const { return static_cast<int>(node()->shape.size()); }
    int dim(int i) const { return node()->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return node()->val.size(); }
    bool requires_grad() const { return node()->requires_grad; }

    std::span<const T> values() const { return node()->val; }
    std::span<T> values_mut() { return node()->val; }
    std::span<const T> grad() const { return node()->grad; }
    std::span<T> grad_mut() { return node()->grad; }

    T item() const {
        require(size() == 1, msg("tensor: item() on non-scalar of shape ", shape_str(shape())));
        return node()->val[0];
    }

    void set_label(const char* label) { node()->label = label; }
    const char* label() const { return node()->label; }

    void zero_grad() {
        node()->grad.assign(node()->val.size(), T(0));
    }

    // Reverse pass from a scalar root: topological order, each node once.
    void backward() const;

    bool all_finite() const {
        for (T v : node()->val)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
    bool grad_finite() const {
        for (T v : node()->grad)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<detail::Node<T>> node_ptr() const { return node_; }

private:
    Tensor(Shape shape, bool requires_grad) {
        node_ = std::make_shared<detail::Node<T>>();
        node_->val.assign(shape_numel(shape), T(0));
        node_->shape = std::move(shape);
        node_->requires_grad = requires_grad;
    }

    detail::Node<T>* node() const {
        require(node_ != nullptr, "tensor: use of undefined tensor");
        return node_.get();
    }

    std::shared_ptr<detail::Node<T>> node_;

    template <typename U>
    friend Tensor<U> make_op(Shape, std::vector<U>, std::vector<Tensor<U>>,
                             std::function<void(detail::Node<U>&)>, const char*);
};

// Internal node factory shared by all ops.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> val, std::vector<Tensor<T>> parents,
                  std::function<void(detail::Node<T>&)> backward, const char* label) {
    Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(val), false);
    bool rg = false;
    for (auto& p : parents) rg = rg || p.requires_grad();
    out.node_->requires_grad = rg;
    out.node_->label = label;
    if (rg) {
        out.node_->parents.reserve(parents.size());
        for (auto& p : parents) out.node_->parents.push_back(p.node_ptr());
        out.node_->backward = std::move(backward);
    }
    return out;
}

enum class Act { relu, sigmoid };
enum class PoolKind { spatial_average, max2x2, weighted };
enum class Reduction { sum, mean };

struct PoolDiag {
    bool fallback = false;  // weighted pool degenerated to unweighted mean
};

// ---- elementwise / structural -------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T c);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> activation(const Tensor<T>& a, Act kind);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis);
template <typename T> Tensor<T> select_row(const Tensor<T>& a, int row);
template <typename T> Tensor<T> select_channel(const Tensor<T>& a, int channel);
template <typename T> Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows);

// ---- layers --------------------------------------------------------------
// conv2d: cross-correlation. input C_in×H×W or B×C_in×H×W; kernel
// C_out×C_in×kh×kw; bias C_out (may be undefined for no bias).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding);

// conv_transpose2d: kernel C_in×C_out×kh×kw; output spatial (H−1)·stride + kh.
// Forward equals the input-backward of conv2d with the same kernel (pad 0).
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride);

// batchnorm2d over B×C×H×W (or C×H×W as B=1). In train mode normalizes with
// batch statistics (variance floor eps) and updates running stats in place;
// eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                      T momentum, T eps);

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, T rate, bool train, std::mt19937_64& rng);

template <typename T> Tensor<T> avg_pool_spatial(const Tensor<T>& input);
template <typename T> Tensor<T> max_pool2x2(const Tensor<T>& input);
template <typename T>
Tensor<T> weighted_pool(const Tensor<T>& input, const Tensor<T>& weight, T eps,
                        PoolDiag* diag = nullptr);
template <typename T>
Tensor<T> pool(const Tensor<T>& input, PoolKind kind, const Tensor<T>* weight = nullptr,
               PoolDiag* diag = nullptr);

// Per-channel spatial normalization: y = x / (sum_{HW} x + eps).
template <typename T> Tensor<T> spatial_normalize(const Tensor<T>& input, T eps);

// x: (B×)C×H×W scaled by a map (B×)1×H×W broadcast over channels.
template <typename T> Tensor<T> mul_broadcast_map(const Tensor<T>& x, const Tensor<T>& map);
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);

// linear: x B×In (or In) with weight Out×In, bias Out.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T> Tensor<T> sum_all(const Tensor<T>& a);

// ---- losses ----------------------------------------------------------------
// Numerically stable binary cross entropy from logits.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target, Reduction red);
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Z(f,t) = sum_j M_j * P_j(f,t); P is k×F×N, M is k.
template <typename T>
Tensor<T> basis_combine(const Tensor<T>& bases, const Tensor<T>& coeffs);

// ---- gradient checking -----------------------------------------------------
// Central finite differences against the analytic gradient of a scalar graph.
// Returns max over coordinates of |analytic − fd| / max(1, |analytic|).
double grad_check(const std::function<Tensor<double>()>& make_loss, Tensor<double> theta,
                  double step);
double grad_check_many(const std::function<Tensor<double>()>& make_loss,
                       const std::vector<Tensor<double>>& thetas, double step);

// Uniform(−bound, bound) fill, the conv/linear init used across the nets.
template <typename T>
void uniform_init(Tensor<T>& t, std::mt19937_64& rng, T bound);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mbs
