#pragma once

#include <string>

#include "p3d2d/classifier.hpp"
#include "p3d2d/optimizer.hpp"

// Checkpoint container: the magic line "P3D2D-CKPT-v1", a text manifest
// (meta key-value lines, then one line per tensor with name, shape and byte
// offset), a "data" separator, and raw little-endian 32-bit floats. Round
// trips are bit-exact. Optimizer accumulators ride along as "opt.*" tensors
// so training can resume.

namespace p3d2d {

inline constexpr const char* kCheckpointMagic = "P3D2D-CKPT-v1";

void save_checkpoint(const std::string& path, ModelParams<float>& params,
                     const AdadeltaState<float>* optimizer = nullptr);

// Loads model parameters; when optimizer_out is given and the file carries
// optimizer tensors, fills it and sets *has_optimizer.
ModelParams<float> load_checkpoint(const std::string& path,
                                   AdadeltaState<float>* optimizer_out = nullptr,
                                   bool* has_optimizer = nullptr);

}  // namespace p3d2d
