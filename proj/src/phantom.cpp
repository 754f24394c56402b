#include "p3d2d/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "p3d2d/rng.hpp"

namespace p3d2d {

PhantomSpec::PhantomSpec() : intensity(default_contrast()) {}

std::array<PhantomClassIntensity, 4> default_contrast() {
    // rows: healthy, edema, non-enhancing, enhancing; cols: FLAIR, T1, T1c, T2
    return {{
        {{2.0, 3.0, 2.5, 2.0}, 0.25},
        {{3.6, 2.2, 2.3, 3.2}, 0.25},
        {{2.8, 1.6, 1.5, 2.6}, 0.25},
        {{3.0, 2.0, 3.8, 2.4}, 0.25},
    }};
}

namespace {

struct Ellipsoid {
    std::array<double, 3> center;
    std::array<double, 3> radii;

    bool contains(int z, int y, int x) const {
        double dz = (z - center[0]) / radii[0];
        double dy = (y - center[1]) / radii[1];
        double dx = (x - center[2]) / radii[2];
        return dz * dz + dy * dy + dx * dx <= 1.0;
    }
};

}  // namespace

std::pair<MultimodalVolume, LabelVolume> generate_phantom(const PhantomSpec& spec,
                                                          std::uint32_t seed) {
    for (int d : spec.dims)
        if (d < 32) throw UsageError("phantom dims must be >= 32 per axis");

    const int dz = spec.dims[0], dy = spec.dims[1], dx = spec.dims[2];
    const double min_dim = static_cast<double>(std::min({dz, dy, dx}));
    std::array<double, 3> center{dz / 2.0, dy / 2.0, dx / 2.0};

    // slightly anisotropic brain so the boundary is non-trivial per axis
    Ellipsoid brain{center,
                    {spec.brain_frac * dz, spec.brain_frac * dy * 0.95, spec.brain_frac * dx * 0.9}};
    std::array<double, 3> tumor_center{center[0] + spec.tumor_offset_frac[0] * dz,
                                       center[1] + spec.tumor_offset_frac[1] * dy,
                                       center[2] + spec.tumor_offset_frac[2] * dx};
    Ellipsoid edema{tumor_center,
                    {spec.edema_frac * min_dim, spec.edema_frac * min_dim * 0.95,
                     spec.edema_frac * min_dim * 0.9}};
    Ellipsoid core{tumor_center,
                   {spec.core_frac * min_dim, spec.core_frac * min_dim, spec.core_frac * min_dim * 0.95}};
    Ellipsoid enhancing{tumor_center,
                        {spec.enhancing_frac * min_dim, spec.enhancing_frac * min_dim,
                         spec.enhancing_frac * min_dim}};

    MultimodalVolume vol;
    vol.dims = spec.dims;
    vol.spacing_mm = spec.spacing_mm;
    vol.subject_id = spec.subject_id;
    for (auto& s : vol.scans) s.assign(vol.voxel_count(), 0.0f);

    LabelVolume lv;
    lv.dims = spec.dims;
    lv.spacing_mm = spec.spacing_mm;
    lv.labels.assign(vol.voxel_count(), 0);

    std::mt19937 rng(seed);
    for (int z = 0; z < dz; ++z)
        for (int y = 0; y < dy; ++y)
            for (int x = 0; x < dx; ++x) {
                if (!brain.contains(z, y, x)) continue;  // air stays exact zero
                int cls = 0;
                if (enhancing.contains(z, y, x))
                    cls = 3;
                else if (core.contains(z, y, x))
                    cls = 2;
                else if (edema.contains(z, y, x))
                    cls = 1;
                std::size_t idx = vol.index(z, y, x);
                lv.labels[idx] = static_cast<std::uint8_t>(cls);
                const PhantomClassIntensity& ci = spec.intensity[cls];
                for (int m = 0; m < kModalities; ++m) {
                    double v = ci.mean[m] + ci.sigma * normal_double(rng);
                    vol.scans[m][idx] = static_cast<float>(std::max(v, 0.05));
                }
            }
    return {std::move(vol), std::move(lv)};
}

}  // namespace p3d2d
