#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "p3d2d/volume.hpp"

// Synthetic multimodal subject: nested ellipsoids with per-class, per-modality
// Gaussian intensities. Outside the brain every modality is exactly zero.
// Classes: 0 healthy, 1 edema, 2 non-enhancing core, 3 enhancing (innermost).

namespace p3d2d {

struct PhantomClassIntensity {
    std::array<double, kModalities> mean;  // FLAIR, T1, T1c, T2
    double sigma;
};

struct PhantomSpec {
    std::array<int, 3> dims{48, 48, 48};  // each >= 32
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::string subject_id{"phantom"};

    // radii as fractions of each axis extent (brain) / of the min extent (tumor shells)
    double brain_frac = 0.42;
    double edema_frac = 0.26;
    double core_frac = 0.18;
    double enhancing_frac = 0.115;
    std::array<double, 3> tumor_offset_frac{0.05, 0.03, 0.0};

    std::array<PhantomClassIntensity, 4> intensity;

    PhantomSpec();
};

// Contrast table with edema bright in FLAIR/T2 and enhancing bright in T1c;
// class means sit several sigma apart in every modality pair.
std::array<PhantomClassIntensity, 4> default_contrast();

std::pair<MultimodalVolume, LabelVolume> generate_phantom(const PhantomSpec& spec,
                                                          std::uint32_t seed);

}  // namespace p3d2d
