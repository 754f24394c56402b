#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "p3d2d/classifier.hpp"
#include "p3d2d/volume.hpp"

// Whole-volume pixel-wise segmentation. Two accelerations: voxels whose four
// modalities are all exactly zero are labeled background without a network
// call, and evaluation can be restricted to a bounding box around probable
// tumor, everything outside defaulting to background.

namespace p3d2d {

struct BoundingBox {
    std::array<int, 3> lo{0, 0, 0};  // inclusive, (z, y, x)
    std::array<int, 3> hi{0, 0, 0};  // inclusive

    bool contains(int z, int y, int x) const {
        return z >= lo[0] && z <= hi[0] && y >= lo[1] && y <= hi[1] && x >= lo[2] && x <= hi[2];
    }
    std::uint64_t volume() const {
        return static_cast<std::uint64_t>(hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) *
               (hi[2] - lo[2] + 1);
    }
};

enum class BboxMode { full, flair_threshold, provided_mask };

// full: whole volume. flair_threshold: tight box around FLAIR voxels above
// mean + k*sigma of the nonzero voxels, dilated by margin and clipped; falls
// back to full (with a warning) when nothing clears the threshold.
// provided_mask: tight box around a caller-supplied binary mask plus margin.
BoundingBox compute_bbox(const MultimodalVolume& vol, BboxMode mode, int margin = 0,
                         double threshold_k = 1.5, const std::vector<std::uint8_t>* mask = nullptr,
                         std::ostream* warnings = nullptr);

struct SegmentStats {
    std::uint64_t network_calls = 0;
    std::uint64_t zero_skipped = 0;   // in-box voxels skipped as all-zero
    std::uint64_t outside_box = 0;
    double seconds = 0.0;
};

// Classifies every voxel inside the box; workers split the box into disjoint
// ranges over shared read-only params, so the result is worker-count
// independent.
LabelVolume segment_volume(const MultimodalVolume& vol, const ModelParams<float>& params,
                           const BoundingBox& bbox, int workers = 1,
                           SegmentStats* stats = nullptr);

// P6 portable pixmap of one FLAIR slice in grayscale with labeled voxels
// colored: 1 yellow, 2 green, 3 blue. axis is 'z', 'y' or 'x'.
void export_overlay(const MultimodalVolume& vol, const LabelVolume& labels, char axis, int index,
                    const std::string& path);

}  // namespace p3d2d
