#include "p3d2d/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <thread>

#include "p3d2d/sampling.hpp"

namespace p3d2d {

namespace {

BoundingBox full_box(const MultimodalVolume& vol) {
    return {{0, 0, 0}, {vol.dims[0] - 1, vol.dims[1] - 1, vol.dims[2] - 1}};
}

BoundingBox box_around(const MultimodalVolume& vol, const std::vector<std::uint8_t>& mask,
                       int margin) {
    BoundingBox box{{vol.dims[0], vol.dims[1], vol.dims[2]}, {-1, -1, -1}};
    for (int z = 0; z < vol.dims[0]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[2]; ++x) {
                if (!mask[vol.index(z, y, x)]) continue;
                box.lo = {std::min(box.lo[0], z), std::min(box.lo[1], y), std::min(box.lo[2], x)};
                box.hi = {std::max(box.hi[0], z), std::max(box.hi[1], y), std::max(box.hi[2], x)};
            }
    for (int a = 0; a < 3; ++a) {
        box.lo[a] = std::max(0, box.lo[a] - margin);
        box.hi[a] = std::min(vol.dims[a] - 1, box.hi[a] + margin);
    }
    return box;
}

}  // namespace

BoundingBox compute_bbox(const MultimodalVolume& vol, BboxMode mode, int margin,
                         double threshold_k, const std::vector<std::uint8_t>* mask,
                         std::ostream* warnings) {
    if (margin < 0) throw UsageError("bounding-box margin must be >= 0");
    switch (mode) {
        case BboxMode::full:
            return full_box(vol);
        case BboxMode::provided_mask: {
            if (!mask || mask->size() != vol.voxel_count())
                throw UsageError("provided_mask mode needs a mask matching the volume");
            bool any = std::any_of(mask->begin(), mask->end(), [](std::uint8_t v) { return v; });
            if (!any) {
                if (warnings) *warnings << "warning: provided mask is empty; using full volume\n";
                return full_box(vol);
            }
            return box_around(vol, *mask, margin);
        }
        case BboxMode::flair_threshold: {
            const auto& flair = vol.scans[static_cast<int>(Modality::FLAIR)];
            double sum = 0.0, sum_sq = 0.0;
            std::size_t n = 0;
            for (float v : flair) {
                if (v == 0.0f) continue;
                sum += v;
                sum_sq += static_cast<double>(v) * v;
                ++n;
            }
            if (n == 0) {
                if (warnings) *warnings << "warning: FLAIR is all zero; using full volume\n";
                return full_box(vol);
            }
            double mean = sum / n;
            double sigma = std::sqrt(std::max(sum_sq / n - mean * mean, 0.0));
            double thresh = mean + threshold_k * sigma;
            std::vector<std::uint8_t> bright(flair.size(), 0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < flair.size(); ++i)
                if (flair[i] != 0.0f && flair[i] > thresh) bright[i] = 1, ++count;
            if (count == 0) {
                if (warnings)
                    *warnings << "warning: no FLAIR voxels above threshold; using full volume\n";
                return full_box(vol);
            }
            return box_around(vol, bright, margin);
        }
    }
    throw UsageError("unknown bounding-box mode");
}

LabelVolume segment_volume(const MultimodalVolume& vol, const ModelParams<float>& params,
                           const BoundingBox& bbox, int workers, SegmentStats* stats) {
    if (workers < 1) throw UsageError("segment_volume needs workers >= 1");
    for (int a = 0; a < 3; ++a)
        if (bbox.lo[a] < 0 || bbox.hi[a] >= vol.dims[a] || bbox.lo[a] > bbox.hi[a])
            throw UsageError("bounding box exceeds volume bounds");

    auto start = std::chrono::steady_clock::now();
    LabelVolume out;
    out.dims = vol.dims;
    out.spacing_mm = vol.spacing_mm;
    out.labels.assign(vol.voxel_count(), 0);

    const int omega = params.cfg.omega, slices = params.cfg.slices;
    const std::uint64_t box_voxels = bbox.volume();
    const int bz = bbox.hi[0] - bbox.lo[0] + 1;
    const int by = bbox.hi[1] - bbox.lo[1] + 1;
    const int bx = bbox.hi[2] - bbox.lo[2] + 1;

    std::vector<std::uint64_t> calls(workers, 0), skipped(workers, 0);
    auto work = [&](int w) {
        std::uint64_t begin = box_voxels * w / workers;
        std::uint64_t end = box_voxels * (w + 1) / workers;
        for (std::uint64_t f = begin; f < end; ++f) {
            int z = bbox.lo[0] + static_cast<int>(f / (static_cast<std::uint64_t>(by) * bx));
            std::uint64_t rem = f % (static_cast<std::uint64_t>(by) * bx);
            int y = bbox.lo[1] + static_cast<int>(rem / bx);
            int x = bbox.lo[2] + static_cast<int>(rem % bx);
            bool any = false;
            for (int m = 0; m < kModalities && !any; ++m)
                any = vol.at(m, z, y, x) != 0.0f;
            if (!any) {
                ++skipped[w];
                continue;  // all-zero voxel: background without a network call
            }
            Patch3D patch = extract_patch(vol, {z, y, x}, omega, slices);
            int cls = predict(patch.modalities, params);
            out.labels[vol.index(z, y, x)] = static_cast<std::uint8_t>(cls);
            ++calls[w];
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }

    if (stats) {
        for (int w = 0; w < workers; ++w) {
            stats->network_calls += calls[w];
            stats->zero_skipped += skipped[w];
        }
        stats->outside_box = vol.voxel_count() - box_voxels;
        stats->seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return out;
}

void export_overlay(const MultimodalVolume& vol, const LabelVolume& labels, char axis, int index,
                    const std::string& path) {
    if (labels.dims != vol.dims) throw DimensionError("overlay: label dims differ from volume");
    int rows, cols;
    switch (axis) {
        case 'z': rows = vol.dims[1]; cols = vol.dims[2]; break;
        case 'y': rows = vol.dims[0]; cols = vol.dims[2]; break;
        case 'x': rows = vol.dims[0]; cols = vol.dims[1]; break;
        default: throw UsageError(std::string("overlay axis must be z, y or x, got ") + axis);
    }
    int extent = axis == 'z' ? vol.dims[0] : axis == 'y' ? vol.dims[1] : vol.dims[2];
    if (index < 0 || index >= extent)
        throw IndexError("overlay slice " + std::to_string(index) + " out of range [0, " +
                         std::to_string(extent) + ")");

    auto voxel = [&](int r, int c) -> std::array<int, 3> {
        switch (axis) {
            case 'z': return {index, r, c};
            case 'y': return {r, index, c};
            default: return {r, c, index};
        }
    };

    const auto& flair = vol.scans[static_cast<int>(Modality::FLAIR)];
    float lo = 0.0f, hi = 0.0f;
    bool first = true;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            auto [z, y, x] = voxel(r, c);
            float v = flair[vol.index(z, y, x)];
            if (first) lo = hi = v, first = false;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    float range = hi - lo;

    static const std::uint8_t palette[3][3] = {{255, 255, 0}, {0, 255, 0}, {0, 0, 255}};
    std::vector<std::uint8_t> pix(static_cast<std::size_t>(rows) * cols * 3);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            auto [z, y, x] = voxel(r, c);
            std::size_t i = vol.index(z, y, x);
            std::uint8_t* px = &pix[(static_cast<std::size_t>(r) * cols + c) * 3];
            int cls = labels.labels[i];
            if (cls >= 1 && cls <= 3) {
                px[0] = palette[cls - 1][0];
                px[1] = palette[cls - 1][1];
                px[2] = palette[cls - 1][2];
            } else {
                float g = range > 0.0f ? (flair[i] - lo) / range : 0.0f;
                std::uint8_t gray = static_cast<std::uint8_t>(std::lround(g * 255.0f));
                px[0] = px[1] = px[2] = gray;
            }
        }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write overlay " + path);
    f << "P6\n" << cols << " " << rows << "\n255\n";
    f.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (!f) throw FormatError("short write to overlay " + path);
}

}  // namespace p3d2d
