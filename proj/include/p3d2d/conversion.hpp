#pragma once

#include <random>

#include "p3d2d/tensor.hpp"

// Slice calibration + 3D-to-2D collapse. A stack of L in-plane slices is
// squeezed to one scalar per slice, re-weighted through a two-layer gating
// network, and collapsed to C_out 2-D maps by a 1x1 bottleneck convolution.

namespace p3d2d {

template <typename T>
struct ConversionParams {
    Tensor<T> w1;                  // [h x L], h = max(1, L / r), no bias
    Tensor<T> w2;                  // [L x h], no bias
    Tensor<T> bottleneck_kernels;  // [C_out x L x 1 x 1]
    Tensor<T> bottleneck_bias;     // [C_out]
    int reduction = 2;
    bool se_enabled = true;
};

inline int excitation_hidden(int slices, int reduction) {
    int h = slices / reduction;
    return h < 1 ? 1 : h;
}

// He-initialized weights, zero biases; draws are made in double so float and
// double instances from one seed carry the same values.
template <typename T>
ConversionParams<T> init_conversion(int slices, int reduction, int conv_out, bool se_enabled,
                                    std::mt19937& rng);

template <typename T>
struct CalibratedPatch {
    Tensor<T> x_prime;  // [L x w x w]
    Tensor<T> u;        // [L], each entry in (0,1)
};

// Per-slice spatial mean.
template <typename T>
Tensor<T> squeeze(const Tensor<T>& x);

// u = sigmoid(W2 * relu(W1 * z)).
template <typename T>
Tensor<T> excite(const Tensor<T>& z, const ConversionParams<T>& params);

// x'_l = u_l * x_l with u = excite(squeeze(x)). With se_enabled off, u is
// all-ones and x' is x unchanged (calibration bypass for ablation runs).
template <typename T>
CalibratedPatch<T> calibrate(const Tensor<T>& x, const ConversionParams<T>& params);

// relu(conv1x1(calibrate(x))): L slices in, C_out 2-D maps out.
template <typename T>
Tensor<T> convert(const Tensor<T>& x, const ConversionParams<T>& params);

}  // namespace p3d2d
