#include "p3d2d/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "p3d2d/classifier.hpp"
#include "p3d2d/rng.hpp"
#include "p3d2d/tensor.hpp"

namespace p3d2d {

namespace {

using DTensor = Tensor<double>;

DTensor rand_tensor(std::vector<int> shape, std::mt19937& rng, bool requires_grad = true,
                    double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = uniform_range(rng, lo, hi);
    return DTensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Values spaced apart so kinked ops (relu, maxpool) stay locally smooth
// around the finite-difference step.
DTensor rand_tensor_spaced(std::vector<int> shape, std::mt19937& rng) {
    long n = shape_numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    std::vector<std::size_t> slots(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    shuffle_vec(slots, rng);
    for (long i = 0; i < n; ++i) {
        double base = (static_cast<double>(slots[i]) + 0.5) / static_cast<double>(n);
        data[i] = (base - 0.5) * 2.0 + 0.001 * (uniform_double(rng) - 0.5);
    }
    return DTensor::from_data(std::move(shape), std::move(data), true);
}

// Fixed-weight sum turns any output into a scalar while exercising the whole
// Jacobian.
DTensor weighted_sum(const DTensor& x, const std::vector<double>& w) {
    DTensor flat = reshape(x, {static_cast<int>(x.size())});
    DTensor weights = DTensor::from_data({1, static_cast<int>(x.size())},
                                         std::vector<double>(w.begin(), w.end()));
    return matmul(weights, reshape(flat, {static_cast<int>(x.size()), 1}));
}

std::vector<double> rand_weights(long n, std::mt19937& rng) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& v : w) v = uniform_range(rng, -1.0, 1.0);
    return w;
}

struct Suite {
    std::uint32_t seed;
    int default_rounds;
    std::vector<GradCheckEntry> entries;

    void check(const std::string& name, double threshold,
               const std::function<double(std::mt19937&)>& one_round, int rounds = 0) {
        if (rounds == 0) rounds = default_rounds;
        double worst = 0.0;
        for (int r = 0; r < rounds; ++r) {
            std::mt19937 rng(derive_seed(seed, static_cast<std::uint32_t>(entries.size() * 1000 + r)));
            worst = std::max(worst, one_round(rng));
        }
        entries.push_back({name, worst, threshold, worst < threshold});
    }
};

double check_shrunken_model(std::mt19937& rng) {
    ModelConfig cfg = shrunken_config();
    cfg.dropout = 0.5;
    auto params = init_model<double>(cfg, rng());
    // Jitter every parameter off the zero-bias init: dead-relu regions would
    // otherwise leave some preactivations sitting exactly on the kink, where
    // finite differences are undefined.
    for_each_param<double>(params, [&rng](const std::string&, DTensor& t) {
        for (auto& v : t.values()) v += uniform_range(rng, -0.05, 0.05);
    });
    std::array<DTensor, kModalities> patches;
    for (int m = 0; m < kModalities; ++m)
        patches[m] = rand_tensor({cfg.slices, cfg.omega, cfg.omega}, rng, true);
    int target = static_cast<int>(uniform_index(rng, static_cast<std::uint32_t>(cfg.classes)));
    std::uint32_t dropout_seed = rng();

    auto loss_fn = [&](const DTensor&) {
        std::mt19937 drop_rng(dropout_seed);  // same mask on every evaluation
        return loss(patches, target, params, drop_rng);
    };

    double worst = 0.0;
    for_each_param<double>(params, [&](const std::string&, DTensor& t) {
        t.zero_grad();
        worst = std::max(worst, finite_diff_check(loss_fn, t));
    });
    for (int m = 0; m < kModalities; ++m)
        worst = std::max(worst, finite_diff_check(loss_fn, patches[m]));
    return worst;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck(std::uint32_t seed, std::ostream* out) {
    Suite suite{seed, 20, {}};

    suite.check("matmul", 1e-6, [](std::mt19937& rng) {
        DTensor a = rand_tensor({4, 5}, rng);
        DTensor b = rand_tensor({5, 3}, rng);
        auto w = rand_weights(12, rng);
        double ea = finite_diff_check(
            [&](const DTensor&) { return weighted_sum(matmul(a, b), w); }, a);
        double eb = finite_diff_check(
            [&](const DTensor&) { return weighted_sum(matmul(a, b), w); }, b);
        return std::max(ea, eb);
    });

    suite.check("conv2d_same", 1e-5, [](std::mt19937& rng) {
        DTensor x = rand_tensor({2, 8, 8}, rng);
        DTensor k = rand_tensor({4, 2, 3, 3}, rng);
        DTensor b = rand_tensor({4}, rng);
        auto w = rand_weights(4 * 8 * 8, rng);
        auto f = [&](const DTensor&) { return weighted_sum(conv2d(x, k, b, Pad::same), w); };
        return std::max({finite_diff_check(f, x), finite_diff_check(f, k),
                         finite_diff_check(f, b)});
    });

    suite.check("conv2d_valid", 1e-5, [](std::mt19937& rng) {
        DTensor x = rand_tensor({2, 6, 6}, rng);
        DTensor k = rand_tensor({3, 2, 3, 3}, rng);
        DTensor b = rand_tensor({3}, rng);
        auto w = rand_weights(3 * 4 * 4, rng);
        auto f = [&](const DTensor&) { return weighted_sum(conv2d(x, k, b, Pad::valid), w); };
        return std::max({finite_diff_check(f, x), finite_diff_check(f, k),
                         finite_diff_check(f, b)});
    });

    suite.check("maxpool2d", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor_spaced({2, 6, 6}, rng);
        auto w = rand_weights(2 * 3 * 3, rng);
        return finite_diff_check(
            [&](const DTensor&) { return weighted_sum(maxpool2d(x), w); }, x);
    });

    suite.check("relu", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor_spaced({3, 4, 4}, rng);
        auto w = rand_weights(48, rng);
        return finite_diff_check([&](const DTensor&) { return weighted_sum(relu(x), w); }, x);
    });

    suite.check("sigmoid", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor({17}, rng, true, -3.0, 3.0);
        auto w = rand_weights(17, rng);
        return finite_diff_check([&](const DTensor&) { return weighted_sum(sigmoid(x), w); }, x);
    });

    suite.check("softmax", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor({6}, rng, true, -2.0, 2.0);
        auto w = rand_weights(6, rng);
        return finite_diff_check([&](const DTensor&) { return weighted_sum(softmax(x), w); }, x);
    });

    suite.check("slice_mean", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor({3, 5, 5}, rng);
        auto w = rand_weights(3, rng);
        return finite_diff_check([&](const DTensor&) { return weighted_sum(slice_mean(x), w); },
                                 x);
    });

    suite.check("scale_slices", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor({3, 4, 4}, rng);
        DTensor u = rand_tensor({3}, rng);
        auto w = rand_weights(48, rng);
        auto f = [&](const DTensor&) { return weighted_sum(scale_slices(x, u), w); };
        return std::max(finite_diff_check(f, x), finite_diff_check(f, u));
    });

    suite.check("concat_channels", 1e-4, [](std::mt19937& rng) {
        DTensor a = rand_tensor({2, 4, 4}, rng);
        DTensor b = rand_tensor({3, 4, 4}, rng);
        auto w = rand_weights(5 * 16, rng);
        auto f = [&](const DTensor&) {
            return weighted_sum(concat_channels<double>({a, b}), w);
        };
        return std::max(finite_diff_check(f, a), finite_diff_check(f, b));
    });

    suite.check("dropout", 1e-4, [](std::mt19937& rng) {
        DTensor x = rand_tensor({5, 5}, rng);
        auto w = rand_weights(25, rng);
        std::uint32_t mask_seed = rng();
        return finite_diff_check(
            [&](const DTensor&) {
                std::mt19937 mask_rng(mask_seed);
                return weighted_sum(dropout(x, 0.5, true, mask_rng), w);
            },
            x);
    });

    suite.check("cross_entropy_softmax", 1e-4, [](std::mt19937& rng) {
        DTensor logits = rand_tensor({4}, rng, true, -2.0, 2.0);
        int target = static_cast<int>(uniform_index(rng, 4));
        return finite_diff_check(
            [&](const DTensor&) { return cross_entropy(softmax(logits), target); }, logits);
    });

    suite.check("linear_add_reshape", 1e-4, [](std::mt19937& rng) {
        DTensor w_mat = rand_tensor({3, 7}, rng);
        DTensor v = rand_tensor({7}, rng);
        DTensor b = rand_tensor({3}, rng);
        auto w = rand_weights(3, rng);
        auto f = [&](const DTensor&) { return weighted_sum(add(linear(w_mat, v), b), w); };
        return std::max({finite_diff_check(f, w_mat), finite_diff_check(f, v),
                         finite_diff_check(f, b)});
    });

    suite.check("excite", 1e-4, [](std::mt19937& rng) {
        auto params = init_conversion<double>(7, 2, 1, true, rng);
        DTensor z = rand_tensor({7}, rng);
        auto w = rand_weights(7, rng);
        auto f = [&](const DTensor&) { return weighted_sum(excite(z, params), w); };
        return std::max({finite_diff_check(f, z), finite_diff_check(f, params.w1),
                         finite_diff_check(f, params.w2)});
    });

    suite.check("convert", 1e-4, [](std::mt19937& rng) {
        auto params = init_conversion<double>(5, 2, 2, true, rng);
        DTensor x = rand_tensor({5, 6, 6}, rng);
        auto w = rand_weights(2 * 36, rng);
        auto f = [&](const DTensor&) { return weighted_sum(convert(x, params), w); };
        return std::max({finite_diff_check(f, x), finite_diff_check(f, params.w1),
                         finite_diff_check(f, params.w2),
                         finite_diff_check(f, params.bottleneck_kernels),
                         finite_diff_check(f, params.bottleneck_bias)});
    });

    suite.check("shrunken_model", 1e-4,
                [](std::mt19937& rng) { return check_shrunken_model(rng); }, 2);

    if (out) {
        for (const auto& e : suite.entries) {
            char line[160];
            std::snprintf(line, sizeof(line), "%s %-22s max_rel_err=%.3e threshold=%.0e\n",
                          e.pass ? "PASS" : "FAIL", e.name.c_str(), e.max_rel_err, e.threshold);
            *out << line;
        }
    }
    return suite.entries;
}

bool gradcheck_passed(const std::vector<GradCheckEntry>& entries) {
    for (const auto& e : entries)
        if (!e.pass) return false;
    return true;
}

}  // namespace p3d2d
