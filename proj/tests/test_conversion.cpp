#include <doctest.h>

#include <cmath>
#include <random>

#include "p3d2d/conversion.hpp"
#include "p3d2d/rng.hpp"

using namespace p3d2d;
using DTensor = Tensor<double>;

namespace {

DTensor rand_patch(int slices, int omega, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(static_cast<std::size_t>(slices) * omega * omega);
    for (auto& v : d) v = uniform_range(rng, lo, hi);
    return DTensor::from_data({slices, omega, omega}, std::move(d), true);
}

// brute-force per-slice spatial mean, written independently of slice_mean
std::vector<double> squeeze_oracle(const DTensor& x) {
    int slices = x.shape()[0], omega = x.shape()[1];
    std::vector<double> z(slices, 0.0);
    for (int l = 0; l < slices; ++l) {
        double acc = 0.0;
        for (int i = 0; i < omega; ++i)
            for (int j = 0; j < omega; ++j)
                acc += x.values()[(static_cast<std::size_t>(l) * omega + i) * omega + j];
        z[l] = acc / (static_cast<double>(omega) * omega);
    }
    return z;
}

// independent matrix arithmetic for u = sigmoid(W2 relu(W1 z))
std::vector<double> excite_oracle(const std::vector<double>& z, const ConversionParams<double>& p) {
    int h = p.w1.shape()[0], l = p.w1.shape()[1];
    std::vector<double> hidden(h, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < l; ++j) hidden[i] += p.w1.values()[i * l + j] * z[j];
        hidden[i] = std::max(hidden[i], 0.0);
    }
    std::vector<double> u(l, 0.0);
    for (int i = 0; i < l; ++i) {
        double acc = 0.0;
        for (int j = 0; j < h; ++j) acc += p.w2.values()[i * h + j] * hidden[j];
        u[i] = 1.0 / (1.0 + std::exp(-acc));
    }
    return u;
}

}  // namespace

TEST_CASE("excitation hidden width") {
    CHECK(excitation_hidden(7, 2) == 3);
    CHECK(excitation_hidden(3, 2) == 1);
    CHECK(excitation_hidden(7, 100) == 1);
    CHECK(excitation_hidden(7, 1) == 7);
}

TEST_CASE("squeeze of constant slices") {
    DTensor c = DTensor::full({3, 5, 5}, 4.0);
    for (double v : squeeze(c).values()) CHECK(v == doctest::Approx(4.0));

    std::vector<double> data(7 * 4 * 4);
    for (int l = 0; l < 7; ++l)
        for (int i = 0; i < 16; ++i) data[l * 16 + i] = l;
    auto z = squeeze(DTensor::from_data({7, 4, 4}, std::move(data)));
    for (int l = 0; l < 7; ++l) CHECK(z.values()[l] == doctest::Approx(l));
}

TEST_CASE("squeeze matches the direct double-summation oracle") {
    std::mt19937 rng(71);
    for (int round = 0; round < 10; ++round) {
        DTensor x = rand_patch(7, 9, rng);
        auto z = squeeze(x).values();
        auto expect = squeeze_oracle(x);
        for (int l = 0; l < 7; ++l) CHECK(z[l] == doctest::Approx(expect[l]).epsilon(1e-7));
    }
}

TEST_CASE("excite with zero weights gates everything to one half") {
    std::mt19937 rng(73);
    auto params = init_conversion<double>(7, 2, 1, true, rng);
    for (auto& v : params.w1.values()) v = 0.0;
    for (auto& v : params.w2.values()) v = 0.0;
    DTensor z = rand_patch(7, 1, rng);
    for (double u : excite(reshape(z, {7}), params).values())
        CHECK(u == doctest::Approx(0.5));
}

TEST_CASE("excite with zero expansion ignores z entirely") {
    std::mt19937 rng(79);
    auto params = init_conversion<double>(7, 1, 1, true, rng);  // r=1, h=L
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) params.w1.values()[i * 7 + j] = i == j ? 1.0 : 0.0;
    for (auto& v : params.w2.values()) v = 0.0;
    for (int round = 0; round < 3; ++round) {
        DTensor z = reshape(rand_patch(7, 1, rng), {7});
        for (double u : excite(z, params).values()) CHECK(u == doctest::Approx(0.5));
    }
}

TEST_CASE("excite matches an independent matrix-arithmetic oracle") {
    std::mt19937 rng(83);
    for (int round = 0; round < 10; ++round) {
        auto params = init_conversion<double>(7, 2, 1, true, rng);
        CHECK(params.w1.shape() == std::vector<int>{3, 7});
        CHECK(params.w2.shape() == std::vector<int>{7, 3});
        std::vector<double> z(7);
        for (auto& v : z) v = uniform_range(rng, -2.0, 2.0);
        auto u = excite(DTensor::from_data({7}, std::vector<double>(z)), params).values();
        auto expect = excite_oracle(z, params);
        for (int l = 0; l < 7; ++l) CHECK(u[l] == doctest::Approx(expect[l]).epsilon(1e-7));
    }

    auto params = init_conversion<double>(7, 2, 1, true, rng);
    CHECK_THROWS_AS(excite(DTensor::zeros({5}), params), DimensionError);
}

TEST_CASE("excitation gate stays inside the open unit interval") {
    std::mt19937 rng(89);
    for (int round = 0; round < 1000; ++round) {
        auto params = init_conversion<double>(7, 2, 1, true, rng);
        DTensor z = reshape(rand_patch(7, 1, rng), {7});
        for (double u : excite(z, params).values()) {
            CHECK(u > 0.0);
            CHECK(u < 1.0);
        }
    }
}

TEST_CASE("calibrate bypass and zero input") {
    std::mt19937 rng(97);
    auto params = init_conversion<double>(5, 2, 1, false, rng);
    DTensor x = rand_patch(5, 6, rng);
    auto cal = calibrate(x, params);
    CHECK(cal.x_prime.values() == x.values());  // exact bypass
    for (double u : cal.u.values()) CHECK(u == 1.0);

    auto on = init_conversion<double>(5, 2, 1, true, rng);
    DTensor zero = DTensor::zeros({5, 6, 6});
    for (double v : calibrate(zero, on).x_prime.values()) CHECK(v == 0.0);
}

TEST_CASE("calibrated slices are uniform rescalings of the input slices") {
    std::mt19937 rng(101);
    auto params = init_conversion<double>(5, 2, 1, true, rng);
    DTensor x = rand_patch(5, 6, rng, 0.5, 2.0);  // bounded away from zero
    auto cal = calibrate(x, params);
    long area = 36;
    for (int l = 0; l < 5; ++l) {
        double u = cal.u.values()[l];
        for (long i = 0; i < area; ++i) {
            double ratio = cal.x_prime.values()[l * area + i] / x.values()[l * area + i];
            CHECK(ratio == doctest::Approx(u).epsilon(1e-9));
        }
    }
}

TEST_CASE("squeeze is homogeneous under positive scaling") {
    std::mt19937 rng(103);
    DTensor x = rand_patch(7, 5, rng);
    double alpha = 3.7;
    std::vector<double> scaled = x.values();
    for (auto& v : scaled) v *= alpha;
    auto z = squeeze(x).values();
    auto za = squeeze(DTensor::from_data({7, 5, 5}, std::move(scaled))).values();
    for (int l = 0; l < 7; ++l) CHECK(za[l] == doctest::Approx(alpha * z[l]).epsilon(1e-6));
}

TEST_CASE("convert shapes, zero kernels and the slice-selection case") {
    std::mt19937 rng(107);
    auto params = init_conversion<double>(7, 2, 1, true, rng);
    DTensor x = rand_patch(7, 9, rng);
    auto out = convert(x, params);
    CHECK(out.shape() == std::vector<int>{1, 9, 9});

    for (auto& v : params.bottleneck_kernels.values()) v = 0.0;
    for (auto& v : params.bottleneck_bias.values()) v = 0.0;
    for (double v : convert(x, params).values()) CHECK(v == 0.0);

    // kernel one-hot on slice 3, gating disabled, nonnegative input
    auto sel = init_conversion<double>(7, 2, 1, false, rng);
    for (int l = 0; l < 7; ++l) sel.bottleneck_kernels.values()[l] = l == 3 ? 1.0 : 0.0;
    sel.bottleneck_bias.values()[0] = 0.0;
    DTensor pos = rand_patch(7, 9, rng, 0.0, 1.0);
    auto picked = convert(pos, sel).values();
    for (long i = 0; i < 81; ++i)
        CHECK(picked[i] == doctest::Approx(pos.values()[3 * 81 + i]));
}

TEST_CASE("bypassed average bottleneck equals the slice-wise mean") {
    std::mt19937 rng(109);
    auto params = init_conversion<double>(5, 2, 1, false, rng);
    for (auto& v : params.bottleneck_kernels.values()) v = 1.0 / 5.0;
    params.bottleneck_bias.values()[0] = 0.0;
    DTensor pos = rand_patch(5, 7, rng, 0.0, 2.0);
    auto out = convert(pos, params).values();
    long area = 49;
    for (long i = 0; i < area; ++i) {
        double mean = 0.0;
        for (int l = 0; l < 5; ++l) mean += pos.values()[l * area + i];
        mean /= 5.0;
        CHECK(out[i] == doctest::Approx(mean).epsilon(1e-9));
    }
}

TEST_CASE("convert end-to-end gradient vs finite differences") {
    std::mt19937 rng(113);
    auto params = init_conversion<double>(5, 2, 2, true, rng);
    DTensor x = rand_patch(5, 6, rng);
    int n = 2 * 36;
    DTensor ones = DTensor::full({1, n}, 1.0);
    auto f = [&](const DTensor&) {
        return matmul(ones, reshape(convert(x, params), {n, 1}));
    };
    CHECK(finite_diff_check(f, x) < 1e-4);
    CHECK(finite_diff_check(f, params.w1) < 1e-4);
    CHECK(finite_diff_check(f, params.w2) < 1e-4);
    CHECK(finite_diff_check(f, params.bottleneck_kernels) < 1e-4);
    CHECK(finite_diff_check(f, params.bottleneck_bias) < 1e-4);
}
