// Acceptance suite: property checks plus a synthetic end-to-end experiment.
// Prints one PASS/FAIL line per criterion; the exit code is the number of
// failed criteria.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "p3d2d/checkpoint.hpp"
#include "p3d2d/commands.hpp"
#include "p3d2d/conversion.hpp"
#include "p3d2d/gradcheck.hpp"
#include "p3d2d/inference.hpp"
#include "p3d2d/metrics.hpp"
#include "p3d2d/optimizer.hpp"
#include "p3d2d/phantom.hpp"
#include "p3d2d/rng.hpp"
#include "p3d2d/training.hpp"

using namespace p3d2d;
namespace fs = std::filesystem;
using DTensor = Tensor<double>;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "p3d2d_acceptance";
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// --- criterion 1: gradient correctness ------------------------------------

Outcome criterion_gradients() {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream sink;
    auto entries = run_gradcheck(1, &sink);
    double elapsed = seconds_since(t0);
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_err / e.threshold);
    bool pass = gradcheck_passed(entries) && elapsed < 60.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu checks, worst err at %.1f%% of threshold, %.1fs",
                  entries.size(), 100.0 * worst, elapsed);
    return {pass, buf};
}

// --- criterion 2: squeeze / excite fidelity --------------------------------

Outcome criterion_squeeze_excite() {
    std::mt19937 rng(2024);
    double worst_squeeze = 0.0, worst_excite = 0.0;
    for (int round = 0; round < 50; ++round) {
        int omega = 5 + 2 * static_cast<int>(uniform_index(rng, 5));
        std::vector<double> data(static_cast<std::size_t>(7) * omega * omega);
        for (auto& v : data) v = uniform_range(rng, -2.0, 2.0);
        DTensor x = DTensor::from_data({7, omega, omega}, std::move(data));
        auto z = squeeze(x).values();
        for (int l = 0; l < 7; ++l) {
            double acc = 0.0;  // direct double summation
            for (int i = 0; i < omega; ++i)
                for (int j = 0; j < omega; ++j)
                    acc += x.values()[(static_cast<std::size_t>(l) * omega + i) * omega + j];
            acc /= static_cast<double>(omega) * omega;
            worst_squeeze = std::max(worst_squeeze, std::abs(z[l] - acc));
        }
    }
    bool in_range = true;
    for (int round = 0; round < 1000; ++round) {
        auto params = init_conversion<double>(7, 2, 1, true, rng);
        std::vector<double> zv(7);
        for (auto& v : zv) v = uniform_range(rng, -3.0, 3.0);
        auto u = excite(DTensor::from_data({7}, std::vector<double>(zv)), params).values();

        // independent matrix arithmetic
        int h = params.w1.shape()[0];
        std::vector<double> hidden(h, 0.0);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < 7; ++j) hidden[i] += params.w1.values()[i * 7 + j] * zv[j];
            hidden[i] = std::max(hidden[i], 0.0);
        }
        for (int l = 0; l < 7; ++l) {
            double acc = 0.0;
            for (int j = 0; j < h; ++j) acc += params.w2.values()[l * h + j] * hidden[j];
            double expect = 1.0 / (1.0 + std::exp(-acc));
            worst_excite = std::max(worst_excite, std::abs(u[l] - expect));
            in_range = in_range && u[l] > 0.0 && u[l] < 1.0;
        }
    }
    bool pass = worst_squeeze < 1e-7 && worst_excite < 1e-7 && in_range;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "squeeze err %.1e, excite err %.1e, gate in (0,1) on 1000 draws: %s",
                  worst_squeeze, worst_excite, in_range ? "yes" : "no");
    return {pass, buf};
}

// --- criterion 3: ADADELTA fidelity -----------------------------------------

Outcome criterion_adadelta() {
    // first-step value, recomputed: E[g2] = 0.05, dx = -sqrt(1e-6 / 0.050001)
    std::vector<DTensor> p{DTensor::from_data({1}, {0.0}, true)};
    auto state = adadelta_init(p);
    p[0].grad()[0] = 1.0;
    adadelta_step(p, state);
    double expected_first = -std::sqrt(1e-6 / 0.050001);
    bool first_ok = std::abs(p[0].values()[0] - expected_first) < 1e-15 &&
                    std::abs(expected_first - (-4.4720912343108364e-3)) < 1e-12;

    // 100 random steps against an independently coded loop
    std::mt19937 rng(77);
    std::vector<DTensor> q{DTensor::from_data({1}, {1.0}, true)};
    auto qs = adadelta_init(q);
    double x = 1.0, eg2 = 0.0, edx2 = 0.0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        double g = uniform_range(rng, -2.0, 2.0);
        q[0].zero_grad();
        q[0].grad()[0] = g;
        adadelta_step(q, qs);
        eg2 = 0.95 * eg2 + 0.05 * g * g;
        double dx = -std::sqrt(edx2 + 1e-6) / std::sqrt(eg2 + 1e-6) * g;
        edx2 = 0.95 * edx2 + 0.05 * dx * dx;
        x += dx;
        worst = std::max(worst, std::abs(q[0].values()[0] - x));
    }
    bool pass = first_ok && worst < 1e-12;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "first step %.10e (expected %.10e), 100-step drift %.2e",
                  p[0].values()[0], expected_first, worst);
    return {pass, buf};
}

// --- criterion 4: metric fidelity ---------------------------------------------

RegionMask random_mask(std::array<int, 3> dims, double density, std::mt19937& rng) {
    RegionMask m;
    m.dims = dims;
    m.spacing_mm = {1.0, 1.0, 1.0};
    m.mask.resize(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    for (auto& v : m.mask) v = uniform_double(rng) < density;
    return m;
}

Outcome criterion_metrics() {
    std::mt19937 rng(4242);
    bool scores_exact = true;
    for (int round = 0; round < 100; ++round) {
        auto a = random_mask({8, 8, 8}, uniform_range(rng, 0.1, 0.7), rng);
        auto b = random_mask({8, 8, 8}, uniform_range(rng, 0.1, 0.7), rng);
        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < a.mask.size(); ++i) {
            tp += a.mask[i] && b.mask[i];
            fp += a.mask[i] && !b.mask[i];
            fn += !a.mask[i] && b.mask[i];
            tn += !a.mask[i] && !b.mask[i];
        }
        auto c = confusion(a, b);
        if (c.tp != tp || c.fp != fp || c.fn != fn || c.tn != tn) scores_exact = false;
        auto check_ratio = [&](std::optional<double> got, std::uint64_t num, std::uint64_t den) {
            if (den == 0) {
                if (got.has_value()) scores_exact = false;
            } else if (!got || *got != static_cast<double>(num) / static_cast<double>(den)) {
                scores_exact = false;
            }
        };
        check_ratio(dsc(c), 2 * tp, fp + 2 * tp + fn);
        check_ratio(sensitivity(c), tp, tp + fn);
        check_ratio(ppv(c), tp, tp + fp);
        check_ratio(specificity(c), tn, tn + fp);
    }

    // hd95 against the all-pairs oracle
    double worst_hd = 0.0;
    int compared = 0;
    for (int round = 0; round < 20; ++round) {
        auto a = random_mask({12, 12, 12}, uniform_range(rng, 0.05, 0.5), rng);
        auto b = random_mask({12, 12, 12}, uniform_range(rng, 0.05, 0.5), rng);
        if (a.count() == 0 || b.count() == 0) continue;
        ++compared;

        auto boundary = [&](const RegionMask& m) {
            std::vector<std::array<int, 3>> out;
            auto inside = [&](int z, int y, int x) {
                return z >= 0 && z < 12 && y >= 0 && y < 12 && x >= 0 && x < 12 &&
                       m.mask[m.index(z, y, x)];
            };
            for (int z = 0; z < 12; ++z)
                for (int y = 0; y < 12; ++y)
                    for (int x = 0; x < 12; ++x) {
                        if (!m.mask[m.index(z, y, x)]) continue;
                        if (!inside(z - 1, y, x) || !inside(z + 1, y, x) || !inside(z, y - 1, x) ||
                            !inside(z, y + 1, x) || !inside(z, y, x - 1) || !inside(z, y, x + 1))
                            out.push_back({z, y, x});
                    }
            return out;
        };
        auto directed = [](const std::vector<std::array<int, 3>>& from,
                           const std::vector<std::array<int, 3>>& to) {
            std::vector<double> d;
            for (const auto& pp : from) {
                double best = 1e300;
                for (const auto& qq : to) {
                    double dz = pp[0] - qq[0], dy = pp[1] - qq[1], dx = pp[2] - qq[2];
                    best = std::min(best, dz * dz + dy * dy + dx * dx);
                }
                d.push_back(std::sqrt(best));
            }
            std::sort(d.begin(), d.end());
            std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * d.size()));
            return d[std::max<std::size_t>(rank, 1) - 1];
        };
        auto ba = boundary(a);
        auto bb = boundary(b);
        double oracle = std::max(directed(ba, bb), directed(bb, ba));
        worst_hd = std::max(worst_hd, std::abs(*hd95(a, b) - oracle));
    }

    auto self = random_mask({10, 10, 10}, 0.4, rng);
    bool self_zero = *hd95(self, self) == 0.0;
    Confusion quoted{2, 1, 1, 0};
    bool formula = *dsc(quoted) == 2.0 / 3.0;

    bool pass = scores_exact && worst_hd <= 1e-9 && self_zero && formula && compared >= 15;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "scores exact on 100 pairs: %s; hd95 oracle err %.1e over %d pairs; "
                  "hd95(a,a)=0: %s; DSC(2,1,1)=2/3: %s",
                  scores_exact ? "yes" : "no", worst_hd, compared, self_zero ? "yes" : "no",
                  formula ? "yes" : "no");
    return {pass, buf};
}

// --- criterion 5: overfit capability ---------------------------------------------

Outcome criterion_overfit() {
    // shrunken model memorizes 64 fixed random patch/label pairs
    ModelConfig small = shrunken_config();
    small.dropout = 0.0;
    auto params = init_model<float>(small, 300);
    std::mt19937 rng(301);
    std::vector<Patch3D> data;
    for (int i = 0; i < 64; ++i) {
        Patch3D p;
        for (int m = 0; m < kModalities; ++m) {
            std::vector<float> d(static_cast<std::size_t>(small.slices) * small.omega * small.omega);
            for (auto& v : d) v = static_cast<float>(uniform_range(rng, -1.0, 1.0));
            p.modalities[m] =
                Tensor<float>::from_data({small.slices, small.omega, small.omega}, std::move(d));
        }
        p.label = static_cast<int>(uniform_index(rng, 4));
        data.push_back(std::move(p));
    }
    auto tensors = collect_params(params);
    auto opt = adadelta_init(tensors);
    TrainOptions options;
    options.epochs = 75;  // 4 steps per epoch at batch 16: 300 steps cap
    options.batch_size = 16;
    options.seed = 302;
    options.target_accuracy = 1.0;
    auto result = train_model(params, opt, data, options);
    bool small_ok = result.final_accuracy == 1.0 && result.steps_taken <= 300;

    // full-size model reaches 98% on 500 balanced phantom patches
    auto t0 = std::chrono::steady_clock::now();
    PhantomSpec spec;
    auto [vol, labels] = generate_phantom(spec, 500);
    auto norm = normalize(vol);
    ModelConfig full;  // omega 33, slices 7, widths 32..64, dropout 0.5
    SamplingPlan plan = balanced_plan(125, full.classes, 501);
    auto patches = sample_training_set(norm, labels, plan, full.omega, full.slices);
    auto fparams = init_model<float>(full, 502);
    auto ftensors = collect_params(fparams);
    auto fopt = adadelta_init(ftensors);
    TrainOptions foptions;
    foptions.epochs = 50;
    foptions.batch_size = 32;
    foptions.seed = 503;
    foptions.target_accuracy = 0.98;
    auto fresult = train_model(fparams, fopt, patches, foptions);
    double elapsed = seconds_since(t0);
    bool full_ok = fresult.final_accuracy >= 0.98 &&
                   static_cast<int>(fresult.epochs.size()) <= 50 && elapsed < 600.0;

    bool pass = small_ok && full_ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "shrunken: acc %.3f in %d steps; full: acc %.3f in %zu epochs, %.0fs",
                  result.final_accuracy, result.steps_taken, fresult.final_accuracy,
                  fresult.epochs.size(), elapsed);
    return {pass, buf};
}

// --- criterion 6: end-to-end phantom experiment -------------------------------------

Outcome criterion_end_to_end() {
    auto dir = work_dir() / "end_to_end";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream console;

    std::vector<std::string> train_subjects;
    for (int s = 0; s < 2; ++s) {
        PhantomCmd make;
        make.out_dir = (dir / ("train_" + std::to_string(s))).string();
        make.seed = 601 + static_cast<std::uint32_t>(s);
        make.subject_id = "train-" + std::to_string(s);
        cmd_phantom(make, console);
        train_subjects.push_back(make.out_dir);
    }
    PhantomCmd held;
    held.out_dir = (dir / "held_out").string();
    held.seed = 699;
    held.subject_id = "held-out";
    cmd_phantom(held, console);

    TrainCmd train;
    train.subjects = train_subjects;
    train.out_dir = (dir / "run").string();
    train.seed = 610;
    train.epochs = 30;
    train.target_accuracy = 0.995;
    cmd_train(train, console);

    PredictCmd predict;
    predict.checkpoint = (fs::path(train.out_dir) / "model.ckpt").string();
    predict.subject = held.out_dir;
    predict.out_dir = (dir / "prediction").string();
    predict.workers = 2;
    cmd_predict(predict, console);

    auto pred = load_labels((fs::path(predict.out_dir) / "prediction.mvol.json").string());
    auto truth = load_labels(held.out_dir);
    auto report = evaluate(pred, truth, truth.spacing_mm);

    auto wt = report.of(Region::WT), tc = report.of(Region::TC), et = report.of(Region::ET);
    bool pass = wt.dsc && *wt.dsc >= 0.85 && tc.dsc && *tc.dsc >= 0.70 && et.dsc &&
                *et.dsc >= 0.60 && wt.hd95_mm.has_value() && tc.hd95_mm.has_value() &&
                et.hd95_mm.has_value();
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "DSC WT %.3f (>=0.85) TC %.3f (>=0.70) ET %.3f (>=0.60); HD95 %s/%s/%s mm",
                  wt.dsc.value_or(-1), tc.dsc.value_or(-1), et.dsc.value_or(-1),
                  wt.hd95_mm ? std::to_string(*wt.hd95_mm).substr(0, 4).c_str() : "n/a",
                  tc.hd95_mm ? std::to_string(*tc.hd95_mm).substr(0, 4).c_str() : "n/a",
                  et.hd95_mm ? std::to_string(*et.hd95_mm).substr(0, 4).c_str() : "n/a");
    return {pass, buf};
}

// --- criterion 7: inference invariants ------------------------------------------------

Outcome criterion_inference() {
    PhantomSpec spec;
    spec.dims = {32, 32, 32};
    auto [vol, labels] = generate_phantom(spec, 700);
    auto norm = normalize(vol);
    ModelConfig small = shrunken_config();
    auto params = init_model<float>(small, 701);
    BoundingBox box{{8, 8, 8}, {23, 23, 23}};

    std::uint64_t nonzero = 0;
    for (int z = box.lo[0]; z <= box.hi[0]; ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y)
            for (int x = box.lo[2]; x <= box.hi[2]; ++x) {
                bool any = false;
                for (int m = 0; m < kModalities; ++m) any |= norm.at(m, z, y, x) != 0.0f;
                nonzero += any;
            }
    SegmentStats s1, s4;
    auto one = segment_volume(norm, params, box, 1, &s1);
    auto four = segment_volume(norm, params, box, 4, &s4);
    bool counter_ok = s1.network_calls == nonzero && s4.network_calls == nonzero;
    bool workers_ok = one.labels == four.labels;

    // ablation flag: identical weights, gate bypassed, different outputs
    auto off = params;
    off.cfg.se_enabled = false;
    for (auto& block : off.conversion) block.se_enabled = false;
    std::mt19937 rng(702), drop(703);
    std::array<Tensor<float>, kModalities> patches;
    for (int m = 0; m < kModalities; ++m) {
        std::vector<float> d(static_cast<std::size_t>(small.slices) * small.omega * small.omega);
        for (auto& v : d) v = static_cast<float>(uniform_range(rng, 0.1, 1.0));
        patches[m] = Tensor<float>::from_data({small.slices, small.omega, small.omega},
                                              std::move(d));
    }
    auto p_on = forward(patches, params, false, drop);
    auto p_off = forward(patches, off, false, drop);
    bool shape_ok = p_on.shape() == p_off.shape();
    bool differs = p_on.values() != p_off.values();

    bool pass = counter_ok && workers_ok && shape_ok && differs;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "calls==nonzero-in-box: %s; 1 vs 4 workers identical: %s; "
                  "ablation changes outputs: %s (shapes preserved: %s)",
                  counter_ok ? "yes" : "no", workers_ok ? "yes" : "no", differs ? "yes" : "no",
                  shape_ok ? "yes" : "no");
    return {pass, buf};
}

// --- criterion 8: reproducibility --------------------------------------------------------

Outcome criterion_reproducibility() {
    auto dir = work_dir() / "repro";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ostringstream console;

    PhantomCmd make;
    make.out_dir = (dir / "subject").string();
    make.dims = {32, 32, 32};
    make.seed = 800;
    cmd_phantom(make, console);

    TrainCmd base;
    base.subjects = {make.out_dir};
    base.model = shrunken_config();
    base.epochs = 3;
    base.batch_size = 8;
    base.patches_per_class = 16;
    base.seed = 801;

    TrainCmd a = base, b = base;
    a.out_dir = (dir / "a").string();
    b.out_dir = (dir / "b").string();
    cmd_train(a, console);
    cmd_train(b, console);

    bool ckpt_same = read_file(fs::path(a.out_dir) / "model.ckpt") ==
                     read_file(fs::path(b.out_dir) / "model.ckpt");
    bool log_same = read_file(fs::path(a.out_dir) / "train.log") ==
                    read_file(fs::path(b.out_dir) / "train.log");
    bool pass = ckpt_same && log_same;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "checkpoints byte-identical: %s; loss logs byte-identical: %s",
                  ckpt_same ? "yes" : "no", log_same ? "yes" : "no");
    return {pass, buf};
}

}  // namespace

int main() {
    struct Entry {
        const char* name;
        Outcome (*run)();
    };
    const Entry criteria[] = {
        {"gradient-correctness", criterion_gradients},
        {"squeeze-excite-fidelity", criterion_squeeze_excite},
        {"adadelta-fidelity", criterion_adadelta},
        {"metric-fidelity", criterion_metrics},
        {"overfit-capability", criterion_overfit},
        {"end-to-end-phantom", criterion_end_to_end},
        {"inference-invariants", criterion_inference},
        {"reproducibility", criterion_reproducibility},
    };

    int failures = 0;
    int index = 0;
    for (const auto& c : criteria) {
        ++index;
        auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        double elapsed = seconds_since(t0);
        std::printf("[%s] criterion %d %s: %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", index,
                    c.name, outcome.detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    std::printf("%d/8 criteria passed\n", 8 - failures);
    return failures;
}
