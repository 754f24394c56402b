#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "p3d2d/classifier.hpp"  // Modality
#include "p3d2d/errors.hpp"

// Volumes live in purpose-built containers: a <name>.mvol.json header (dims
// [D,H,W], spacing_mm [sz,sy,sx], dtype, role, data_file) next to a raw
// binary with voxel (z,y,x) at offset z*H*W + y*W + x. A subject is a
// directory of five containers: four modalities plus labels.

namespace p3d2d {

struct MultimodalVolume {
    std::array<int, 3> dims{0, 0, 0};  // D, H, W
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::string subject_id;
    std::array<std::vector<float>, kModalities> scans;  // z-major, FLAIR/T1/T1c/T2

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
    }
    bool in_bounds(int z, int y, int x) const {
        return z >= 0 && z < dims[0] && y >= 0 && y < dims[1] && x >= 0 && x < dims[2];
    }
    float at(int modality, int z, int y, int x) const {
        return scans[modality][index(z, y, x)];
    }
};

struct LabelVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> labels;

    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
    }
    std::uint8_t at(int z, int y, int x) const { return labels[index(z, y, x)]; }
};

// Writes four modality containers (+ labels when given) into dir.
void save_subject(const std::string& dir, const MultimodalVolume& vol,
                  const LabelVolume* labels = nullptr);

// Writes one u8 label container <stem>.mvol.json / <stem>.raw into dir.
void save_labels(const std::string& dir, const LabelVolume& labels,
                 const std::string& stem = "labels");

// Assembles the four modality containers found in a subject directory.
MultimodalVolume load_volume(const std::string& dir);

// Accepts a subject directory or a direct path to a labels header.
LabelVolume load_labels(const std::string& path);

std::vector<long> label_histogram(const LabelVolume& labels, int classes);

}  // namespace p3d2d
