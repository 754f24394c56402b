#include "p3d2d/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

using nlohmann::json;

namespace p3d2d {

const char* region_name(Region r) {
    switch (r) {
        case Region::WT: return "WT";
        case Region::TC: return "TC";
        case Region::ET: return "ET";
    }
    throw IndexError("bad region");
}

std::size_t RegionMask::count() const {
    std::size_t n = 0;
    for (auto v : mask) n += v != 0;
    return n;
}

RegionMask region_mask(const LabelVolume& labels, Region kind) {
    RegionMask rm;
    rm.dims = labels.dims;
    rm.spacing_mm = labels.spacing_mm;
    rm.kind = kind;
    rm.mask.resize(labels.labels.size());
    int lo = kind == Region::WT ? 1 : kind == Region::TC ? 2 : 3;
    for (std::size_t i = 0; i < rm.mask.size(); ++i)
        rm.mask[i] = labels.labels[i] >= lo && labels.labels[i] <= 3;
    return rm;
}

Confusion confusion(const RegionMask& pred, const RegionMask& truth) {
    if (pred.dims != truth.dims)
        throw DimensionError("confusion: mask dims differ");
    Confusion c;
    for (std::size_t i = 0; i < pred.mask.size(); ++i) {
        bool p = pred.mask[i], t = truth.mask[i];
        if (p && t) ++c.tp;
        else if (p && !t) ++c.fp;
        else if (!p && t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::optional<double> dsc(const Confusion& c) { return ratio(2 * c.tp, c.fp + 2 * c.tp + c.fn); }
std::optional<double> sensitivity(const Confusion& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> ppv(const Confusion& c) { return ratio(c.tp, c.tp + c.fp); }
std::optional<double> specificity(const Confusion& c) { return ratio(c.tn, c.tn + c.fp); }

// --- HD95 -------------------------------------------------------------------

namespace {

constexpr double kBig = 1e20;

// Mask voxels with a face-adjacent background neighbor or on the volume face.
std::vector<std::uint8_t> boundary_voxels(const RegionMask& m) {
    const int dz = m.dims[0], dy = m.dims[1], dx = m.dims[2];
    std::vector<std::uint8_t> b(m.mask.size(), 0);
    for (int z = 0; z < dz; ++z)
        for (int y = 0; y < dy; ++y)
            for (int x = 0; x < dx; ++x) {
                std::size_t i = m.index(z, y, x);
                if (!m.mask[i]) continue;
                bool edge = z == 0 || z == dz - 1 || y == 0 || y == dy - 1 || x == 0 ||
                            x == dx - 1;
                if (!edge) {
                    edge = !m.mask[m.index(z - 1, y, x)] || !m.mask[m.index(z + 1, y, x)] ||
                           !m.mask[m.index(z, y - 1, x)] || !m.mask[m.index(z, y + 1, x)] ||
                           !m.mask[m.index(z, y, x - 1)] || !m.mask[m.index(z, y, x + 1)];
                }
                b[i] = edge;
            }
    return b;
}

// Felzenszwalb-Huttenlocher 1-D squared distance transform on a grid with
// physical sample spacing s. f and d may alias distinct strided views.
void dt1d(const double* f, double* d, int n, long stride, double s, std::vector<int>& v,
          std::vector<double>& z, std::vector<double>& fbuf) {
    if (n == 1) {
        d[0] = f[0];
        return;
    }
    for (int q = 0; q < n; ++q) fbuf[q] = f[static_cast<long>(q) * stride];
    int k = 0;
    v[0] = 0;
    z[0] = -kBig;
    z[1] = kBig;
    for (int q = 1; q < n; ++q) {
        double xq = q * s;
        double sect;
        while (true) {
            double xv = v[k] * s;
            sect = ((fbuf[q] + xq * xq) - (fbuf[v[k]] + xv * xv)) / (2 * xq - 2 * xv);
            if (k > 0 && sect <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = sect;
        z[k + 1] = kBig;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        double xq = q * s;
        while (z[k + 1] < xq) ++k;
        double dx = xq - v[k] * s;
        d[static_cast<long>(q) * stride] = dx * dx + fbuf[v[k]];
    }
}

// Squared Euclidean distance (mm) from every voxel to the nearest set voxel.
std::vector<double> distance_transform(const std::vector<std::uint8_t>& set,
                                       const std::array<int, 3>& dims,
                                       const std::array<double, 3>& spacing) {
    const int dz = dims[0], dy = dims[1], dx = dims[2];
    std::vector<double> d(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) d[i] = set[i] ? 0.0 : kBig;

    int nmax = std::max({dz, dy, dx});
    std::vector<int> v(nmax);
    std::vector<double> z(nmax + 1), fbuf(nmax);

    auto idx = [&](int zz, int yy, int xx) {
        return (static_cast<std::size_t>(zz) * dy + yy) * dx + xx;
    };
    for (int zz = 0; zz < dz; ++zz)
        for (int yy = 0; yy < dy; ++yy) {
            double* row = d.data() + idx(zz, yy, 0);
            dt1d(row, row, dx, 1, spacing[2], v, z, fbuf);
        }
    for (int zz = 0; zz < dz; ++zz)
        for (int xx = 0; xx < dx; ++xx) {
            double* col = d.data() + idx(zz, 0, xx);
            dt1d(col, col, dy, dx, spacing[1], v, z, fbuf);
        }
    for (int yy = 0; yy < dy; ++yy)
        for (int xx = 0; xx < dx; ++xx) {
            double* pil = d.data() + idx(0, yy, xx);
            dt1d(pil, pil, dz, static_cast<long>(dy) * dx, spacing[0], v, z, fbuf);
        }
    return d;
}

// Nearest-rank percentile of an unsorted non-empty list.
double nearest_rank(std::vector<double>& values, double pct) {
    std::sort(values.begin(), values.end());
    std::size_t rank = static_cast<std::size_t>(std::ceil(pct * static_cast<double>(values.size())));
    if (rank < 1) rank = 1;
    return values[rank - 1];
}

std::vector<double> directed_distances(const std::vector<std::uint8_t>& from_boundary,
                                       const std::vector<double>& to_sq_dist) {
    std::vector<double> out;
    for (std::size_t i = 0; i < from_boundary.size(); ++i)
        if (from_boundary[i]) out.push_back(std::sqrt(to_sq_dist[i]));
    return out;
}

}  // namespace

std::optional<double> hd95(const RegionMask& pred, const RegionMask& truth) {
    if (pred.dims != truth.dims) throw DimensionError("hd95: mask dims differ");
    if (pred.spacing_mm != truth.spacing_mm) throw DimensionError("hd95: mask spacing differs");
    bool pe = pred.count() == 0, te = truth.count() == 0;
    if (pe && te) return 0.0;
    if (pe || te) return std::nullopt;

    auto pb = boundary_voxels(pred);
    auto tb = boundary_voxels(truth);
    auto dist_to_truth = distance_transform(tb, pred.dims, pred.spacing_mm);
    auto dist_to_pred = distance_transform(pb, pred.dims, pred.spacing_mm);

    auto d_pt = directed_distances(pb, dist_to_truth);
    auto d_tp = directed_distances(tb, dist_to_pred);
    return std::max(nearest_rank(d_pt, 0.95), nearest_rank(d_tp, 0.95));
}

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& truth,
                       const std::array<double, 3>& spacing_mm) {
    if (pred.dims != truth.dims) throw DimensionError("evaluate: label dims differ");
    auto start = std::chrono::steady_clock::now();
    MetricsReport report;
    report.voxels = static_cast<std::uint64_t>(pred.labels.size());
    for (int r = 0; r < 3; ++r) {
        Region region = static_cast<Region>(r);
        RegionMask pm = region_mask(pred, region);
        RegionMask tm = region_mask(truth, region);
        pm.spacing_mm = spacing_mm;
        tm.spacing_mm = spacing_mm;
        Confusion c = confusion(pm, tm);
        RegionScores& s = report.regions[r];
        s.dsc = dsc(c);
        s.sensitivity = sensitivity(c);
        s.ppv = ppv(c);
        s.specificity = specificity(c);
        s.hd95_mm = hd95(pm, tm);
    }
    report.runtime_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

namespace {

json scores_json(const RegionScores& s) {
    auto opt = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    return json{{"dsc", opt(s.dsc)},
                {"sensitivity", opt(s.sensitivity)},
                {"ppv", opt(s.ppv)},
                {"specificity", opt(s.specificity)},
                {"hd95_mm", opt(s.hd95_mm)}};
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
    json j;
    j["subject"] = report.subject;
    j["voxels"] = report.voxels;
    j["runtime_sec"] = report.runtime_sec;
    json regions;
    for (int r = 0; r < 3; ++r)
        regions[region_name(static_cast<Region>(r))] = scores_json(report.regions[r]);
    j["regions"] = regions;
    return j.dump(2);
}

namespace {

// Linear-interpolation quantile of sorted values.
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted[0];
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

json aggregate_metric(std::vector<double> values) {
    if (values.empty()) return json(nullptr);
    std::sort(values.begin(), values.end());
    double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                  static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    double stddev = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
    return json{{"n", values.size()},
                {"mean", mean},
                {"std", stddev},
                {"median", quantile_sorted(values, 0.5)},
                {"q25", quantile_sorted(values, 0.25)},
                {"q75", quantile_sorted(values, 0.75)}};
}

}  // namespace

std::string aggregate_to_json(const std::vector<MetricsReport>& reports) {
    static const char* metric_names[5] = {"dsc", "sensitivity", "ppv", "specificity", "hd95_mm"};
    json j;
    j["subjects"] = reports.size();
    for (int r = 0; r < 3; ++r) {
        json region;
        for (int m = 0; m < 5; ++m) {
            std::vector<double> values;
            for (const auto& rep : reports) {
                const RegionScores& s = rep.regions[r];
                const std::optional<double>* fields[5] = {&s.dsc, &s.sensitivity, &s.ppv,
                                                          &s.specificity, &s.hd95_mm};
                if (*fields[m]) values.push_back(**fields[m]);
            }
            region[metric_names[m]] = aggregate_metric(std::move(values));
        }
        j["regions"][region_name(static_cast<Region>(r))] = region;
    }
    return j.dump(2);
}

}  // namespace p3d2d
