#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "p3d2d/volume.hpp"

// Overlap and surface-distance scores over the composite evaluation regions:
// WT = classes {1,2,3}, TC = {2,3}, ET = {3}. Ratios with an empty
// denominator are reported as undefined (null in JSON) rather than forced.

namespace p3d2d {

enum class Region : int { WT = 0, TC = 1, ET = 2 };
const char* region_name(Region r);

struct RegionMask {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    Region kind = Region::WT;
    std::vector<std::uint8_t> mask;

    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
    }
    std::size_t count() const;
};

RegionMask region_mask(const LabelVolume& labels, Region kind);

struct Confusion {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion(const RegionMask& pred, const RegionMask& truth);

// DSC = 2TP / (FP + 2TP + FN); undefined on 0/0.
std::optional<double> dsc(const Confusion& c);
std::optional<double> sensitivity(const Confusion& c);  // TP / (TP + FN)
std::optional<double> ppv(const Confusion& c);          // TP / (TP + FP)
std::optional<double> specificity(const Confusion& c);  // TN / (TN + FP)

// 95th-percentile symmetric boundary distance in mm. Boundary voxels are mask
// voxels with a face-adjacent background neighbor or on the volume face;
// the percentile is nearest-rank over each directed distance list and the
// result is the max of the two directions. Undefined when exactly one mask is
// empty; 0 when both are.
std::optional<double> hd95(const RegionMask& pred, const RegionMask& truth);

struct RegionScores {
    std::optional<double> dsc, sensitivity, ppv, specificity, hd95_mm;
};

struct MetricsReport {
    std::string subject;
    std::uint64_t voxels = 0;
    double runtime_sec = 0.0;
    std::array<RegionScores, 3> regions;  // WT, TC, ET

    const RegionScores& of(Region r) const { return regions[static_cast<int>(r)]; }
};

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& truth,
                       const std::array<double, 3>& spacing_mm);

std::string report_to_json(const MetricsReport& report);

// Table-style aggregate across subjects: mean, std, median, 25/75 quantiles
// per region and metric, undefined values excluded.
std::string aggregate_to_json(const std::vector<MetricsReport>& reports);

}  // namespace p3d2d
