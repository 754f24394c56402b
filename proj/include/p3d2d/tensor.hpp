#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "p3d2d/errors.hpp"

// Dense row-major tensors with a reverse-mode tape. Every op records its
// operands and a backward rule on the output node; backward() replays the
// recorded graph once in reverse topological order.
//
// The scalar type fixes the precision of a whole graph: float for the
// training/inference runtime, double for gradient verification. Ops never mix
// the two.

namespace p3d2d {

enum class Pad { same, valid };

template <typename T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backward_fn;  // empty for leaves
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, T fill, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                            bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    long size() const { return static_cast<long>(node_->value.size()); }
    bool requires_grad() const { return node_->requires_grad; }

    // rvalue access copies: the temporary handle may be the node's only owner
    const std::vector<int>& shape() const& { return node_->shape; }
    std::vector<int> shape() && { return node_->shape; }
    std::vector<T>& values() & { return node_->value; }
    const std::vector<T>& values() const& { return node_->value; }
    std::vector<T> values() && { return node_->value; }

    std::vector<T>& grad();
    const std::vector<T>& grad() const;
    void zero_grad();

    // Value of a single-element tensor.
    T item() const;

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

long shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Disables graph recording on the current thread for pure evaluation; ops
// then produce plain value nodes with no parents or backward rules.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// --- primitive ops -------------------------------------------------------

// Elementwise sum of two same-shape tensors.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x * c for a plain constant.
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c);

// Same data, new extents (product must match). Backward is a pass-through.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape);

// a[m x k] * b[k x n]. Backward: da = g b^T, db = a^T g.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Cross-correlation of input[C_in x H x W] with kernels[C_out x C_in x k x k]
// plus per-channel bias. Odd k; 'same' zero-pads to keep H x W.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Pad pad);

// 2x2/stride-2 max pool; odd trailing row/column dropped. Gradient goes to the
// first occurrence of each window maximum in row-major order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// Probability vector over a 1-D logit vector, computed with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

// Mean over each omega x omega slice of x[L x omega x omega] -> [L].
template <typename T>
Tensor<T> slice_mean(const Tensor<T>& x);

// out_l = u_l * x_l for x[L x omega x omega], u[L].
template <typename T>
Tensor<T> scale_slices(const Tensor<T>& x, const Tensor<T>& u);

// Channel-axis concatenation of [C_i x H x W] parts, order preserved.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

// Inverted dropout: training mode zeroes with probability p and scales
// survivors by 1/(1-p); eval mode (or p == 0) is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, std::mt19937& rng);

// -log(probs[target]) with the probability clamped to >= 1e-12.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, int target);

// Reverse pass from a scalar loss; grads accumulate additively.
template <typename T>
void backward(const Tensor<T>& loss);

// W[m x n] * v[n] -> [m], via matmul on a column view.
template <typename T>
Tensor<T> linear(const Tensor<T>& weight, const Tensor<T>& v);

// --- verification --------------------------------------------------------

// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic|+|numeric|)
// using central differences. 64-bit only; f must be a pure scalar function.
double finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         Tensor<double>& x, double h = 1e-5);

}  // namespace p3d2d
