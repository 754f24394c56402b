#include "p3d2d/optimizer.hpp"

#include <cmath>

namespace p3d2d {

template <typename T>
AdadeltaState<T> adadelta_init(const std::vector<Tensor<T>>& params, double rho, double epsilon,
                               double learning_rate) {
    AdadeltaState<T> s;
    s.rho = rho;
    s.epsilon = epsilon;
    s.learning_rate = learning_rate;
    s.accum_grad_sq.reserve(params.size());
    s.accum_update_sq.reserve(params.size());
    for (const auto& p : params) {
        s.accum_grad_sq.emplace_back(p.values().size(), T(0));
        s.accum_update_sq.emplace_back(p.values().size(), T(0));
    }
    return s;
}

template <typename T>
void adadelta_update(T* x, const T* g, T* eg2, T* edx2, std::size_t n, double rho, double epsilon,
                     double learning_rate) {
    const T r = static_cast<T>(rho);
    const T one_minus_r = static_cast<T>(1.0 - rho);
    const T eps = static_cast<T>(epsilon);
    const T lr = static_cast<T>(learning_rate);
    for (std::size_t i = 0; i < n; ++i) {
        T gi = g[i];
        eg2[i] = r * eg2[i] + one_minus_r * gi * gi;
        T dx = -std::sqrt(edx2[i] + eps) / std::sqrt(eg2[i] + eps) * gi;
        edx2[i] = r * edx2[i] + one_minus_r * dx * dx;
        x[i] += lr * dx;
    }
}

template <typename T>
void adadelta_step(std::vector<Tensor<T>>& params, AdadeltaState<T>& state) {
    if (params.size() != state.accum_grad_sq.size())
        throw DimensionError("optimizer state covers " + std::to_string(state.accum_grad_sq.size()) +
                             " tensors, model has " + std::to_string(params.size()));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& x = params[t].values();
        const auto& g = params[t].grad();
        auto& eg2 = state.accum_grad_sq[t];
        auto& edx2 = state.accum_update_sq[t];
        if (eg2.size() != x.size())
            throw DimensionError("optimizer accumulator " + std::to_string(t) +
                                 " has size " + std::to_string(eg2.size()) + ", parameter has " +
                                 std::to_string(x.size()));
        adadelta_update(x.data(), g.data(), eg2.data(), edx2.data(), x.size(), state.rho,
                        state.epsilon, state.learning_rate);
    }
}

template <typename T>
void adadelta_reset(AdadeltaState<T>& state) {
    for (auto& a : state.accum_grad_sq) std::fill(a.begin(), a.end(), T(0));
    for (auto& a : state.accum_update_sq) std::fill(a.begin(), a.end(), T(0));
}

template <typename T>
std::vector<Tensor<T>> collect_params(ModelParams<T>& params) {
    std::vector<Tensor<T>> out;
    for_each_param<T>(params, [&out](const std::string&, Tensor<T>& t) { out.push_back(t); });
    return out;
}

template <typename T>
void scale_grads(std::vector<Tensor<T>>& params, T factor) {
    for (auto& p : params)
        for (auto& g : p.grad()) g *= factor;
}

#define P3D2D_INSTANTIATE_OPTIMIZER(T)                                                          \
    template AdadeltaState<T> adadelta_init<T>(const std::vector<Tensor<T>>&, double, double,   \
                                               double);                                        \
    template void adadelta_update<T>(T*, const T*, T*, T*, std::size_t, double, double, double); \
    template void adadelta_step<T>(std::vector<Tensor<T>>&, AdadeltaState<T>&);                 \
    template void adadelta_reset<T>(AdadeltaState<T>&);                                         \
    template std::vector<Tensor<T>> collect_params<T>(ModelParams<T>&);                        \
    template void scale_grads<T>(std::vector<Tensor<T>>&, T);

P3D2D_INSTANTIATE_OPTIMIZER(float)
P3D2D_INSTANTIATE_OPTIMIZER(double)

}  // namespace p3d2d
