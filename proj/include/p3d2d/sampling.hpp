#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "p3d2d/tensor.hpp"
#include "p3d2d/volume.hpp"

// Patch extraction and class-balanced training-set assembly.

namespace p3d2d {

// Per-modality z-score over nonzero voxels (sigma clamped to >= 1e-6);
// zero voxels stay exactly zero so inference can keep skipping them.
MultimodalVolume normalize(const MultimodalVolume& vol);

struct Patch3D {
    std::array<Tensor<float>, kModalities> modalities;  // each [L x w x w]
    std::array<int, 3> center{0, 0, 0};                 // z, y, x
    int label = -1;                                     // -1 when unknown
};

// w x w in-plane crop over L consecutive z-slices centered on a voxel;
// out-of-bounds positions zero-filled.
Patch3D extract_patch(const MultimodalVolume& vol, std::array<int, 3> center, int omega,
                      int slices);

enum class PatchTransform { flip_x, flip_y, rot180 };

Patch3D augment_patch(const Patch3D& patch, PatchTransform t);

struct SamplingPlan {
    std::vector<long> targets;        // per-class patch counts
    std::vector<int> augment_mult;    // per-class multiplier on the target (default 1)
    std::uint32_t seed = 1;
    // Class-0 centers are restricted to voxels with signal in at least one
    // modality; all-zero voxels never reach the network at inference time.
    bool skip_empty_background = true;

    long effective_target(int cls) const {
        long t = cls < static_cast<int>(targets.size()) ? targets[cls] : 0;
        int m = cls < static_cast<int>(augment_mult.size()) ? augment_mult[cls] : 1;
        return t * m;
    }
};

SamplingPlan balanced_plan(long per_class, int classes, std::uint32_t seed);

// Seeded class-balanced draw: uniform distinct centers per class; classes
// short on voxels are topped up with flipped/rotated copies. Output order is
// a seeded shuffle. Classes absent from the volume warn and yield nothing.
std::vector<Patch3D> sample_training_set(const MultimodalVolume& vol, const LabelVolume& labels,
                                         const SamplingPlan& plan, int omega, int slices,
                                         std::ostream* warnings = nullptr);

}  // namespace p3d2d
