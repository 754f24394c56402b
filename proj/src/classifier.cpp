#include "p3d2d/classifier.hpp"

#include <cmath>

#include "p3d2d/rng.hpp"

namespace p3d2d {

const char* modality_name(int m) {
    static const char* names[kModalities] = {"FLAIR", "T1", "T1c", "T2"};
    if (m < 0 || m >= kModalities) throw IndexError("modality index out of range");
    return names[m];
}

void ModelConfig::validate() const {
    if (omega < 5 || omega % 2 == 0) throw UsageError("omega must be odd and >= 5");
    if (slices < 1 || slices % 2 == 0) throw UsageError("slices must be odd and >= 1");
    if (reduction < 1) throw UsageError("reduction ratio must be >= 1");
    if (conv_out < 1) throw UsageError("conv_out must be >= 1");
    if (classes < 2) throw UsageError("classes must be >= 2");
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must be in [0, 1)");
    for (int wdt : conv_widths)
        if (wdt < 1) throw UsageError("conv widths must be >= 1");
    if (fc1 < 1 || fc2 < 1) throw UsageError("fc widths must be >= 1");
    if (pooled_extent() < 1) throw UsageError("omega too small for two pool stages");
}

ModelConfig shrunken_config() {
    ModelConfig cfg;
    cfg.omega = 9;
    cfg.slices = 3;
    cfg.conv_widths = {2, 2, 2, 3, 3, 3};
    cfg.fc1 = 8;
    cfg.fc2 = 4;
    return cfg;
}

namespace {

template <typename T>
Conv2dLayer<T> init_conv(int c_out, int c_in, int k, std::mt19937& rng) {
    double scale = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
    std::vector<T> w(static_cast<std::size_t>(c_out) * c_in * k * k);
    for (auto& v : w) v = static_cast<T>(normal_double(rng) * scale);
    return {Tensor<T>::from_data({c_out, c_in, k, k}, std::move(w), true),
            Tensor<T>::zeros({c_out}, true)};
}

template <typename T>
DenseLayer<T> init_dense(int out, int in, std::mt19937& rng) {
    double scale = std::sqrt(2.0 / in);
    std::vector<T> w(static_cast<std::size_t>(out) * in);
    for (auto& v : w) v = static_cast<T>(normal_double(rng) * scale);
    return {Tensor<T>::from_data({out, in}, std::move(w), true), Tensor<T>::zeros({out}, true)};
}

}  // namespace

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint32_t seed) {
    cfg.validate();
    std::mt19937 rng(seed);
    ModelParams<T> p;
    p.cfg = cfg;
    for (int m = 0; m < kModalities; ++m)
        p.conversion[m] =
            init_conversion<T>(cfg.slices, cfg.reduction, cfg.conv_out, cfg.se_enabled, rng);
    int c_in = kModalities * cfg.conv_out;
    for (int i = 0; i < 6; ++i) {
        p.classifier.conv_stack[i] = init_conv<T>(cfg.conv_widths[i], c_in, 3, rng);
        c_in = cfg.conv_widths[i];
    }
    p.classifier.fc1 = init_dense<T>(cfg.fc1, cfg.flat_size(), rng);
    p.classifier.fc2 = init_dense<T>(cfg.fc2, cfg.fc1, rng);
    p.classifier.fc_out = init_dense<T>(cfg.classes, cfg.fc2, rng);
    return p;
}

template <typename T>
void for_each_param(ModelParams<T>& params,
                    const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    for (int m = 0; m < kModalities; ++m) {
        std::string base = std::string("conv.") + modality_name(m) + ".";
        fn(base + "w1", params.conversion[m].w1);
        fn(base + "w2", params.conversion[m].w2);
        fn(base + "bottleneck_kernels", params.conversion[m].bottleneck_kernels);
        fn(base + "bottleneck_bias", params.conversion[m].bottleneck_bias);
    }
    for (int i = 0; i < 6; ++i) {
        std::string base = "cls.conv" + std::to_string(i) + ".";
        fn(base + "kernels", params.classifier.conv_stack[i].kernels);
        fn(base + "bias", params.classifier.conv_stack[i].bias);
    }
    fn("cls.fc1.weight", params.classifier.fc1.weight);
    fn("cls.fc1.bias", params.classifier.fc1.bias);
    fn("cls.fc2.weight", params.classifier.fc2.weight);
    fn("cls.fc2.bias", params.classifier.fc2.bias);
    fn("cls.fc_out.weight", params.classifier.fc_out.weight);
    fn("cls.fc_out.bias", params.classifier.fc_out.bias);
}

template <typename T>
long param_count(ModelParams<T>& params) {
    long n = 0;
    for_each_param<T>(params, [&n](const std::string&, Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
void zero_all_grads(ModelParams<T>& params) {
    for_each_param<T>(params, [](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
Tensor<T> forward(const std::array<Tensor<T>, kModalities>& patches, const ModelParams<T>& params,
                  bool training, std::mt19937& rng) {
    const ModelConfig& cfg = params.cfg;
    std::vector<int> expected{cfg.slices, cfg.omega, cfg.omega};
    for (int m = 0; m < kModalities; ++m) {
        if (!patches[m].defined())
            throw UsageError(std::string("missing patch for modality ") + modality_name(m));
        if (patches[m].shape() != expected)
            throw DimensionError(std::string("patch for ") + modality_name(m) + " has shape " +
                                 shape_str(patches[m].shape()) + ", expected " +
                                 shape_str(expected));
    }

    std::vector<Tensor<T>> maps;
    maps.reserve(kModalities);
    for (int m = 0; m < kModalities; ++m)
        maps.push_back(convert(patches[m], params.conversion[m]));
    Tensor<T> x = concat_channels(maps);

    for (int i = 0; i < 3; ++i)
        x = relu(conv2d(x, params.classifier.conv_stack[i].kernels,
                        params.classifier.conv_stack[i].bias, Pad::same));
    x = maxpool2d(x);
    for (int i = 3; i < 6; ++i)
        x = relu(conv2d(x, params.classifier.conv_stack[i].kernels,
                        params.classifier.conv_stack[i].bias, Pad::same));
    x = maxpool2d(x);

    Tensor<T> v = reshape(x, {cfg.flat_size()});
    v = relu(add(linear(params.classifier.fc1.weight, v), params.classifier.fc1.bias));
    v = dropout(v, cfg.dropout, training, rng);
    v = relu(add(linear(params.classifier.fc2.weight, v), params.classifier.fc2.bias));
    v = dropout(v, cfg.dropout, training, rng);
    Tensor<T> logits = add(linear(params.classifier.fc_out.weight, v), params.classifier.fc_out.bias);
    return softmax(logits);
}

template <typename T>
Tensor<T> loss(const std::array<Tensor<T>, kModalities>& patches, int target,
               const ModelParams<T>& params, std::mt19937& rng) {
    return cross_entropy(forward(patches, params, true, rng), target);
}

template <typename T>
int predict(const std::array<Tensor<T>, kModalities>& patches, const ModelParams<T>& params) {
    NoGradGuard guard;
    std::mt19937 rng(0);  // unused: dropout is identity in evaluation mode
    Tensor<T> probs = forward(patches, params, false, rng);
    const auto& p = probs.values();
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

#define P3D2D_INSTANTIATE_CLASSIFIER(T)                                                        \
    template ModelParams<T> init_model<T>(const ModelConfig&, std::uint32_t);                  \
    template void for_each_param<T>(ModelParams<T>&,                                          \
                                    const std::function<void(const std::string&, Tensor<T>&)>&); \
    template long param_count<T>(ModelParams<T>&);                                            \
    template void zero_all_grads<T>(ModelParams<T>&);                                         \
    template Tensor<T> forward<T>(const std::array<Tensor<T>, kModalities>&,                  \
                                  const ModelParams<T>&, bool, std::mt19937&);                \
    template Tensor<T> loss<T>(const std::array<Tensor<T>, kModalities>&, int,                \
                               const ModelParams<T>&, std::mt19937&);                         \
    template int predict<T>(const std::array<Tensor<T>, kModalities>&, const ModelParams<T>&);

P3D2D_INSTANTIATE_CLASSIFIER(float)
P3D2D_INSTANTIATE_CLASSIFIER(double)

}  // namespace p3d2d
