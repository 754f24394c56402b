#pragma once

#include <vector>

#include "p3d2d/classifier.hpp"
#include "p3d2d/tensor.hpp"

// ADADELTA: decayed accumulators of squared gradients and squared updates,
// per coordinate:
//   E[g2]   <- rho E[g2] + (1-rho) g^2
//   dx      = -sqrt(E[dx2] + eps) / sqrt(E[g2] + eps) * g
//   E[dx2]  <- rho E[dx2] + (1-rho) dx^2
//   x       <- x + lr * dx

namespace p3d2d {

template <typename T>
struct AdadeltaState {
    double rho = 0.95;
    double epsilon = 1e-6;
    double learning_rate = 1.0;
    std::vector<std::vector<T>> accum_grad_sq;    // E[g^2], zero-initialized
    std::vector<std::vector<T>> accum_update_sq;  // E[dx^2], zero-initialized
};

template <typename T>
AdadeltaState<T> adadelta_init(const std::vector<Tensor<T>>& params, double rho = 0.95,
                               double epsilon = 1e-6, double learning_rate = 1.0);

// One coordinate-wise update over a raw array; the tensor-level step loops this.
template <typename T>
void adadelta_update(T* x, const T* g, T* eg2, T* edx2, std::size_t n, double rho, double epsilon,
                     double learning_rate);

// In-place update of every parameter from its accumulated gradient.
template <typename T>
void adadelta_step(std::vector<Tensor<T>>& params, AdadeltaState<T>& state);

// Zero both accumulators.
template <typename T>
void adadelta_reset(AdadeltaState<T>& state);

// Parameter tensors of a model in canonical order (shared handles).
template <typename T>
std::vector<Tensor<T>> collect_params(ModelParams<T>& params);

// Mini-batch mean reduction: grads accumulate over samples, then scale by 1/batch.
template <typename T>
void scale_grads(std::vector<Tensor<T>>& params, T factor);

}  // namespace p3d2d
