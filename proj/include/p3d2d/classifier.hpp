#pragma once

#include <array>
#include <functional>
#include <random>
#include <string>

#include "p3d2d/conversion.hpp"
#include "p3d2d/tensor.hpp"

// Central-voxel classifier: four conversion blocks (one per modality), their
// 2-D maps concatenated and fed through two conv/pool stages and three dense
// layers ending in a softmax over tissue classes.

namespace p3d2d {

enum class Modality : int { FLAIR = 0, T1 = 1, T1C = 2, T2 = 3 };
inline constexpr int kModalities = 4;
const char* modality_name(int m);

struct ModelConfig {
    int omega = 33;    // in-plane patch extent (odd)
    int slices = 7;    // through-plane extent L (odd)
    int reduction = 2; // excitation reduction ratio r
    int conv_out = 1;  // bottleneck output maps per modality
    int classes = 4;   // healthy, edema, non-enhancing, enhancing
    double dropout = 0.5;
    bool se_enabled = true;
    std::array<int, 6> conv_widths{32, 32, 32, 64, 64, 64};
    int fc1 = 64;
    int fc2 = 32;

    void validate() const;
    // spatial extent after the two pool stages
    int pooled_extent() const { return omega / 2 / 2; }
    int flat_size() const { return conv_widths[5] * pooled_extent() * pooled_extent(); }
};

// Reduced geometry used by gradient verification and overfit checks.
ModelConfig shrunken_config();

template <typename T>
struct Conv2dLayer {
    Tensor<T> kernels;  // [C_out x C_in x 3 x 3]
    Tensor<T> bias;     // [C_out]
};

template <typename T>
struct DenseLayer {
    Tensor<T> weight;  // [out x in]
    Tensor<T> bias;    // [out]
};

template <typename T>
struct ClassifierParams {
    std::array<Conv2dLayer<T>, 6> conv_stack;
    DenseLayer<T> fc1, fc2, fc_out;
};

template <typename T>
struct ModelParams {
    ModelConfig cfg;
    std::array<ConversionParams<T>, kModalities> conversion;  // FLAIR, T1, T1c, T2
    ClassifierParams<T> classifier;
};

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint32_t seed);

// Canonical parameter walk; defines checkpoint and optimizer ordering.
template <typename T>
void for_each_param(ModelParams<T>& params,
                    const std::function<void(const std::string&, Tensor<T>&)>& fn);

template <typename T>
long param_count(ModelParams<T>& params);

template <typename T>
void zero_all_grads(ModelParams<T>& params);

// Class probabilities for one multimodal patch (tensors [L x w x w] in
// FLAIR, T1, T1c, T2 order).
template <typename T>
Tensor<T> forward(const std::array<Tensor<T>, kModalities>& patches, const ModelParams<T>& params,
                  bool training, std::mt19937& rng);

// Cross-entropy of a training-mode forward pass against the central voxel's label.
template <typename T>
Tensor<T> loss(const std::array<Tensor<T>, kModalities>& patches, int target,
               const ModelParams<T>& params, std::mt19937& rng);

// Argmax class in evaluation mode; ties resolve to the lowest index.
template <typename T>
int predict(const std::array<Tensor<T>, kModalities>& patches, const ModelParams<T>& params);

}  // namespace p3d2d
