#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "p3d2d/phantom.hpp"
#include "p3d2d/rng.hpp"
#include "p3d2d/sampling.hpp"

using namespace p3d2d;

namespace {

MultimodalVolume make_volume(std::array<int, 3> dims, float fill) {
    MultimodalVolume vol;
    vol.dims = dims;
    for (auto& s : vol.scans) s.assign(vol.voxel_count(), fill);
    return vol;
}

}  // namespace

TEST_CASE("normalize: zeros stay exactly zero, moments settle") {
    MultimodalVolume vol = make_volume({6, 6, 6}, 0.0f);
    std::mt19937 rng(3);
    // half the voxels get signal, half stay background
    for (int m = 0; m < kModalities; ++m)
        for (std::size_t i = 0; i < vol.voxel_count(); i += 2)
            vol.scans[m][i] = static_cast<float>(uniform_range(rng, 1.0, 9.0));

    auto out = normalize(vol);
    for (int m = 0; m < kModalities; ++m) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < out.voxel_count(); ++i) {
            if (vol.scans[m][i] == 0.0f) {
                CHECK(out.scans[m][i] == 0.0f);  // exact zero preserved
            } else {
                sum += out.scans[m][i];
                sq += static_cast<double>(out.scans[m][i]) * out.scans[m][i];
                ++n;
            }
        }
        double mean = sum / n;
        double stddev = std::sqrt(sq / n - mean * mean);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(stddev - 1.0) < 1e-3);
    }
}

TEST_CASE("normalize: all-zero and constant scans") {
    auto zero = normalize(make_volume({4, 4, 4}, 0.0f));
    for (float v : zero.scans[0]) CHECK(v == 0.0f);

    auto flat = normalize(make_volume({4, 4, 4}, 5.0f));
    for (float v : flat.scans[0]) CHECK(v == 0.0f);  // clamped-sigma path
}

TEST_CASE("extract_patch centers, corners and the naive-crop oracle") {
    PhantomSpec spec;
    auto [vol, labels] = generate_phantom(spec, 13);
    const int omega = 9, slices = 5;

    std::array<int, 3> center{24, 25, 22};
    auto patch = extract_patch(vol, center, omega, slices);
    for (int m = 0; m < kModalities; ++m) {
        // the central element equals the volume value at the center voxel
        float mid = patch.modalities[m]
                        .values()[(static_cast<std::size_t>(slices / 2) * omega + omega / 2) *
                                      omega +
                                  omega / 2];
        CHECK(mid == vol.at(m, center[0], center[1], center[2]));
        // every in-bounds position matches a direct index walk
        for (int l = 0; l < slices; ++l)
            for (int i = 0; i < omega; ++i)
                for (int j = 0; j < omega; ++j) {
                    int z = center[0] + l - slices / 2;
                    int y = center[1] + i - omega / 2;
                    int x = center[2] + j - omega / 2;
                    float expect = vol.in_bounds(z, y, x) ? vol.at(m, z, y, x) : 0.0f;
                    CHECK(patch.modalities[m]
                              .values()[(static_cast<std::size_t>(l) * omega + i) * omega + j] ==
                          expect);
                }
    }

    // a corner patch is mostly zero fill (roughly 7/8 outside)
    auto corner = extract_patch(vol, {0, 0, 0}, omega, slices);
    std::size_t zeros = 0;
    for (float v : corner.modalities[0].values()) zeros += v == 0.0f;
    CHECK(zeros >= corner.modalities[0].values().size() * 3 / 4);

    CHECK_THROWS_AS(extract_patch(vol, {-1, 0, 0}, omega, slices), UsageError);
    CHECK_THROWS_AS(extract_patch(vol, {0, 0, 48}, omega, slices), UsageError);
}

TEST_CASE("augmentation flips leave the center voxel in place") {
    MultimodalVolume vol = make_volume({5, 5, 5}, 0.0f);
    for (int m = 0; m < kModalities; ++m)
        for (std::size_t i = 0; i < vol.voxel_count(); ++i)
            vol.scans[m][i] = static_cast<float>(i + 10 * m);

    auto patch = extract_patch(vol, {2, 2, 2}, 3, 3);
    for (auto t : {PatchTransform::flip_x, PatchTransform::flip_y, PatchTransform::rot180}) {
        auto aug = augment_patch(patch, t);
        for (int m = 0; m < kModalities; ++m) {
            const auto& src = patch.modalities[m].values();
            const auto& dst = aug.modalities[m].values();
            CHECK(dst[(1 * 3 + 1) * 3 + 1] == src[(1 * 3 + 1) * 3 + 1]);
        }
    }

    // hand-checked flip along in-plane x: rows stay, columns reverse
    auto fx = augment_patch(patch, PatchTransform::flip_x);
    const auto& src = patch.modalities[0].values();
    const auto& dst = fx.modalities[0].values();
    for (int l = 0; l < 3; ++l)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(dst[(l * 3 + i) * 3 + j] == src[(l * 3 + i) * 3 + (2 - j)]);
}

TEST_CASE("balanced sampling hits the plan exactly on a phantom") {
    PhantomSpec spec;
    auto [vol, labels] = generate_phantom(spec, 17);
    auto norm = normalize(vol);

    SamplingPlan plan = balanced_plan(10, 4, 21);
    auto patches = sample_training_set(norm, labels, plan, 9, 3);
    CHECK(patches.size() == 40);
    std::array<int, 4> hist{};
    for (const auto& p : patches) {
        REQUIRE(p.label >= 0);
        REQUIRE(p.label < 4);
        ++hist[p.label];
        CHECK(p.label == labels.at(p.center[0], p.center[1], p.center[2]));
    }
    for (int c = 0; c < 4; ++c) CHECK(hist[c] == 10);

    // same seed reproduces the same draw, bitwise
    auto again = sample_training_set(norm, labels, plan, 9, 3);
    REQUIRE(again.size() == patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        CHECK(again[i].center == patches[i].center);
        CHECK(again[i].modalities[0].values() == patches[i].modalities[0].values());
    }
}

TEST_CASE("scarce classes are topped up with augmented copies") {
    MultimodalVolume vol = make_volume({33, 33, 33}, 1.0f);
    // make voxel values distinct so flipped copies are distinguishable
    for (int m = 0; m < kModalities; ++m)
        for (std::size_t i = 0; i < vol.voxel_count(); ++i)
            vol.scans[m][i] = static_cast<float>(1.0 + 0.001 * static_cast<double>(i));
    LabelVolume labels;
    labels.dims = vol.dims;
    labels.labels.assign(vol.voxel_count(), 0);
    labels.labels[vol.index(16, 10, 10)] = 1;
    labels.labels[vol.index(16, 16, 16)] = 1;
    labels.labels[vol.index(16, 20, 20)] = 1;

    SamplingPlan plan;
    plan.targets = {0, 9};
    plan.augment_mult = {1, 1};
    plan.seed = 5;
    auto patches = sample_training_set(vol, labels, plan, 5, 3);
    CHECK(patches.size() == 9);

    // 3 originals and 6 augmented copies; centers cycle over the 3 voxels
    std::map<std::array<int, 3>, int> per_center;
    for (const auto& p : patches) {
        CHECK(p.label == 1);
        ++per_center[p.center];
    }
    CHECK(per_center.size() == 3);
    for (const auto& [c, n] : per_center) CHECK(n == 3);

    // centers are flip fixed points: center value identical across copies
    for (const auto& p : patches) {
        float center_value = p.modalities[0].values()[(1 * 5 + 2) * 5 + 2];
        CHECK(center_value == vol.at(0, p.center[0], p.center[1], p.center[2]));
    }
}

TEST_CASE("a class with no voxels warns and yields nothing") {
    MultimodalVolume vol = make_volume({33, 33, 33}, 1.0f);
    LabelVolume labels;
    labels.dims = vol.dims;
    labels.labels.assign(vol.voxel_count(), 0);

    SamplingPlan plan = balanced_plan(5, 4, 3);
    std::ostringstream warnings;
    auto patches = sample_training_set(vol, labels, plan, 5, 3, &warnings);
    CHECK(patches.size() == 5);  // only class 0 exists
    CHECK(warnings.str().find("class 1") != std::string::npos);
}

TEST_CASE("background sampling skips voxels with no signal") {
    MultimodalVolume vol = make_volume({33, 33, 33}, 0.0f);
    for (int m = 0; m < kModalities; ++m)
        for (int z = 10; z < 20; ++z)
            for (int y = 10; y < 20; ++y)
                for (int x = 10; x < 20; ++x) vol.scans[m][vol.index(z, y, x)] = 2.0f;
    LabelVolume labels;
    labels.dims = vol.dims;
    labels.labels.assign(vol.voxel_count(), 0);

    SamplingPlan plan = balanced_plan(50, 1, 7);
    auto patches = sample_training_set(vol, labels, plan, 5, 3);
    CHECK(patches.size() == 50);
    for (const auto& p : patches) {
        CHECK(vol.at(0, p.center[0], p.center[1], p.center[2]) != 0.0f);
    }

    // spec-literal draw over all class voxels when the filter is off
    plan.skip_empty_background = false;
    auto all = sample_training_set(vol, labels, plan, 5, 3);
    bool any_empty_center = false;
    for (const auto& p : all)
        any_empty_center |= vol.at(0, p.center[0], p.center[1], p.center[2]) == 0.0f;
    CHECK(any_empty_center);  // 1000 signal voxels among 35937: empties dominate
}
