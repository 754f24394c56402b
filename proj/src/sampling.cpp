#include "p3d2d/sampling.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "p3d2d/rng.hpp"

namespace p3d2d {

MultimodalVolume normalize(const MultimodalVolume& vol) {
    MultimodalVolume out = vol;
    for (int m = 0; m < kModalities; ++m) {
        const auto& src = vol.scans[m];
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
        for (float v : src) {
            if (v == 0.0f) continue;
            sum += v;
            sum_sq += static_cast<double>(v) * v;
            ++n;
        }
        if (n == 0) continue;  // all-zero scan stays untouched
        double mean = sum / n;
        double var = sum_sq / n - mean * mean;
        double sigma = std::sqrt(std::max(var, 0.0));
        if (sigma < 1e-6) sigma = 1e-6;
        auto& dst = out.scans[m];
        for (std::size_t i = 0; i < dst.size(); ++i)
            if (src[i] != 0.0f) dst[i] = static_cast<float>((src[i] - mean) / sigma);
    }
    return out;
}

Patch3D extract_patch(const MultimodalVolume& vol, std::array<int, 3> center, int omega,
                      int slices) {
    const auto [cz, cy, cx] = center;
    if (!vol.in_bounds(cz, cy, cx))
        throw UsageError("patch center (" + std::to_string(cz) + "," + std::to_string(cy) + "," +
                         std::to_string(cx) + ") outside volume bounds");
    const int hw = omega / 2, hl = slices / 2;
    Patch3D patch;
    patch.center = center;
    for (int m = 0; m < kModalities; ++m) {
        std::vector<float> data(static_cast<std::size_t>(slices) * omega * omega, 0.0f);
        for (int l = 0; l < slices; ++l) {
            int z = cz + l - hl;
            if (z < 0 || z >= vol.dims[0]) continue;
            for (int i = 0; i < omega; ++i) {
                int y = cy + i - hw;
                if (y < 0 || y >= vol.dims[1]) continue;
                int x0 = std::max(0, cx - hw);
                int x1 = std::min(vol.dims[2] - 1, cx + hw);
                const float* src = &vol.scans[m][vol.index(z, y, x0)];
                float* dst = &data[(static_cast<std::size_t>(l) * omega + i) * omega +
                                   (x0 - (cx - hw))];
                for (int x = x0; x <= x1; ++x) *dst++ = *src++;
            }
        }
        patch.modalities[m] = Tensor<float>::from_data({slices, omega, omega}, std::move(data));
    }
    return patch;
}

Patch3D augment_patch(const Patch3D& patch, PatchTransform t) {
    Patch3D out;
    out.center = patch.center;
    out.label = patch.label;
    for (int m = 0; m < kModalities; ++m) {
        const auto& shape = patch.modalities[m].shape();
        int slices = shape[0], omega = shape[1];
        const auto& src = patch.modalities[m].values();
        std::vector<float> dst(src.size());
        for (int l = 0; l < slices; ++l)
            for (int i = 0; i < omega; ++i)
                for (int j = 0; j < omega; ++j) {
                    int si = i, sj = j;
                    switch (t) {
                        case PatchTransform::flip_x: sj = omega - 1 - j; break;
                        case PatchTransform::flip_y: si = omega - 1 - i; break;
                        case PatchTransform::rot180:
                            si = omega - 1 - i;
                            sj = omega - 1 - j;
                            break;
                    }
                    dst[(static_cast<std::size_t>(l) * omega + i) * omega + j] =
                        src[(static_cast<std::size_t>(l) * omega + si) * omega + sj];
                }
        out.modalities[m] = Tensor<float>::from_data(shape, std::move(dst));
    }
    return out;
}

SamplingPlan balanced_plan(long per_class, int classes, std::uint32_t seed) {
    SamplingPlan plan;
    plan.targets.assign(classes, per_class);
    plan.augment_mult.assign(classes, 1);
    plan.seed = seed;
    return plan;
}

std::vector<Patch3D> sample_training_set(const MultimodalVolume& vol, const LabelVolume& labels,
                                         const SamplingPlan& plan, int omega, int slices,
                                         std::ostream* warnings) {
    if (labels.dims != vol.dims) throw DimensionError("label dims differ from volume dims");
    const int classes = static_cast<int>(plan.targets.size());
    std::mt19937 rng(plan.seed);

    // class -> voxel list in (z,y,x) scan order
    std::vector<std::vector<std::array<int, 3>>> voxels(classes);
    for (int z = 0; z < vol.dims[0]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[2]; ++x) {
                int cls = labels.at(z, y, x);
                if (cls >= classes) continue;
                if (cls == 0 && plan.skip_empty_background) {
                    bool any = false;
                    for (int m = 0; m < kModalities && !any; ++m)
                        any = vol.at(m, z, y, x) != 0.0f;
                    if (!any) continue;
                }
                voxels[cls].push_back({z, y, x});
            }

    static const PatchTransform kTransforms[3] = {PatchTransform::flip_x, PatchTransform::flip_y,
                                                  PatchTransform::rot180};
    std::vector<Patch3D> out;
    for (int cls = 0; cls < classes; ++cls) {
        long target = plan.effective_target(cls);
        if (target <= 0) continue;
        const auto& pool = voxels[cls];
        if (pool.empty()) {
            if (warnings)
                *warnings << "warning: class " << cls
                          << " has no voxels; sampled 0 of " << target << " patches\n";
            continue;
        }
        auto make = [&](const std::array<int, 3>& c) {
            Patch3D p = extract_patch(vol, c, omega, slices);
            p.label = labels.at(c[0], c[1], c[2]);
            return p;
        };
        if (static_cast<long>(pool.size()) >= target) {
            auto picks = sample_without_replacement(pool.size(), static_cast<std::size_t>(target),
                                                    rng);
            for (std::size_t i : picks) out.push_back(make(pool[i]));
        } else {
            for (const auto& c : pool) out.push_back(make(c));
            long extra = target - static_cast<long>(pool.size());
            // originals cycle fastest, transforms advance once per full cycle
            for (long i = 0; i < extra; ++i) {
                const auto& c = pool[static_cast<std::size_t>(i % pool.size())];
                PatchTransform t = kTransforms[(i / pool.size()) % 3];
                out.push_back(augment_patch(make(c), t));
            }
        }
    }
    shuffle_vec(out, rng);
    return out;
}

}  // namespace p3d2d
