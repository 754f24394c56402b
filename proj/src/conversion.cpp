#include "p3d2d/conversion.hpp"

#include <cmath>

#include "p3d2d/rng.hpp"

namespace p3d2d {

namespace {

template <typename T>
Tensor<T> he_matrix(int rows, int cols, std::mt19937& rng) {
    double scale = std::sqrt(2.0 / cols);
    std::vector<T> w(static_cast<std::size_t>(rows) * cols);
    for (auto& v : w) v = static_cast<T>(normal_double(rng) * scale);
    return Tensor<T>::from_data({rows, cols}, std::move(w), true);
}

}  // namespace

template <typename T>
ConversionParams<T> init_conversion(int slices, int reduction, int conv_out, bool se_enabled,
                                    std::mt19937& rng) {
    if (slices < 1 || reduction < 1 || conv_out < 1)
        throw UsageError("conversion block needs slices, reduction, conv_out >= 1");
    int h = excitation_hidden(slices, reduction);
    ConversionParams<T> p;
    p.reduction = reduction;
    p.se_enabled = se_enabled;
    p.w1 = he_matrix<T>(h, slices, rng);
    p.w2 = he_matrix<T>(slices, h, rng);
    double scale = std::sqrt(2.0 / slices);
    std::vector<T> k(static_cast<std::size_t>(conv_out) * slices);
    for (auto& v : k) v = static_cast<T>(normal_double(rng) * scale);
    p.bottleneck_kernels = Tensor<T>::from_data({conv_out, slices, 1, 1}, std::move(k), true);
    p.bottleneck_bias = Tensor<T>::zeros({conv_out}, true);
    return p;
}

template <typename T>
Tensor<T> squeeze(const Tensor<T>& x) {
    return slice_mean(x);
}

template <typename T>
Tensor<T> excite(const Tensor<T>& z, const ConversionParams<T>& params) {
    if (z.shape().size() != 1 || z.shape()[0] != params.w1.shape()[1])
        throw DimensionError("excite: z " + shape_str(z.shape()) + " does not match W1 " +
                             shape_str(params.w1.shape()));
    return sigmoid(linear(params.w2, relu(linear(params.w1, z))));
}

template <typename T>
CalibratedPatch<T> calibrate(const Tensor<T>& x, const ConversionParams<T>& params) {
    if (!params.se_enabled) {
        return {x, Tensor<T>::full({x.shape()[0]}, T(1))};
    }
    Tensor<T> u = excite(squeeze(x), params);
    return {scale_slices(x, u), u};
}

template <typename T>
Tensor<T> convert(const Tensor<T>& x, const ConversionParams<T>& params) {
    CalibratedPatch<T> cal = calibrate(x, params);
    return relu(conv2d(cal.x_prime, params.bottleneck_kernels, params.bottleneck_bias, Pad::same));
}

#define P3D2D_INSTANTIATE_CONVERSION(T)                                                           \
    template ConversionParams<T> init_conversion<T>(int, int, int, bool, std::mt19937&);          \
    template Tensor<T> squeeze<T>(const Tensor<T>&);                                             \
    template Tensor<T> excite<T>(const Tensor<T>&, const ConversionParams<T>&);                  \
    template CalibratedPatch<T> calibrate<T>(const Tensor<T>&, const ConversionParams<T>&);      \
    template Tensor<T> convert<T>(const Tensor<T>&, const ConversionParams<T>&);

P3D2D_INSTANTIATE_CONVERSION(float)
P3D2D_INSTANTIATE_CONVERSION(double)

}  // namespace p3d2d
