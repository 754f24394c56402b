#include "p3d2d/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "p3d2d/checkpoint.hpp"
#include "p3d2d/gradcheck.hpp"
#include "p3d2d/inference.hpp"
#include "p3d2d/metrics.hpp"
#include "p3d2d/phantom.hpp"
#include "p3d2d/rng.hpp"
#include "p3d2d/training.hpp"
#include "p3d2d/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace p3d2d {

// --- config (de)serialization ------------------------------------------------

void to_json(json& j, const ModelConfig& c) {
    j = json{{"omega", c.omega},           {"slices", c.slices},
             {"reduction", c.reduction},   {"conv_out", c.conv_out},
             {"classes", c.classes},       {"dropout", c.dropout},
             {"se_enabled", c.se_enabled}, {"conv_widths", c.conv_widths},
             {"fc1", c.fc1},               {"fc2", c.fc2}};
}

void from_json(const json& j, ModelConfig& c) {
    c.omega = j.value("omega", c.omega);
    c.slices = j.value("slices", c.slices);
    c.reduction = j.value("reduction", c.reduction);
    c.conv_out = j.value("conv_out", c.conv_out);
    c.classes = j.value("classes", c.classes);
    c.dropout = j.value("dropout", c.dropout);
    c.se_enabled = j.value("se_enabled", c.se_enabled);
    c.conv_widths = j.value("conv_widths", c.conv_widths);
    c.fc1 = j.value("fc1", c.fc1);
    c.fc2 = j.value("fc2", c.fc2);
}

void to_json(json& j, const PhantomCmd& c) {
    j = json{{"command", "phantom"}, {"out", c.out_dir},   {"dims", c.dims},
             {"spacing", c.spacing}, {"seed", c.seed},     {"subject_id", c.subject_id}};
}

void from_json(const json& j, PhantomCmd& c) {
    c.out_dir = j.value("out", c.out_dir);
    c.dims = j.value("dims", c.dims);
    c.spacing = j.value("spacing", c.spacing);
    c.seed = j.value("seed", c.seed);
    c.subject_id = j.value("subject_id", c.subject_id);
}

void to_json(json& j, const TrainCmd& c) {
    j = json{{"command", "train"},
             {"subjects", c.subjects},
             {"out", c.out_dir},
             {"model", c.model},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"patches_per_class", c.patches_per_class},
             {"seed", c.seed},
             {"target_accuracy", c.target_accuracy},
             {"save_optimizer", c.save_optimizer}};
}

void from_json(const json& j, TrainCmd& c) {
    c.subjects = j.value("subjects", c.subjects);
    c.out_dir = j.value("out", c.out_dir);
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patches_per_class = j.value("patches_per_class", c.patches_per_class);
    c.seed = j.value("seed", c.seed);
    c.target_accuracy = j.value("target_accuracy", c.target_accuracy);
    c.save_optimizer = j.value("save_optimizer", c.save_optimizer);
}

void to_json(json& j, const PredictCmd& c) {
    j = json{{"command", "predict"},
             {"checkpoint", c.checkpoint},
             {"subject", c.subject},
             {"out", c.out_dir},
             {"bbox", c.bbox_mode},
             {"mask", c.mask_path},
             {"margin", c.margin},
             {"threshold_k", c.threshold_k},
             {"workers", c.workers},
             {"overlays", c.overlays}};
}

void from_json(const json& j, PredictCmd& c) {
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    c.subject = j.value("subject", c.subject);
    c.out_dir = j.value("out", c.out_dir);
    c.bbox_mode = j.value("bbox", c.bbox_mode);
    c.mask_path = j.value("mask", c.mask_path);
    c.margin = j.value("margin", c.margin);
    c.threshold_k = j.value("threshold_k", c.threshold_k);
    c.workers = j.value("workers", c.workers);
    c.overlays = j.value("overlays", c.overlays);
}

void to_json(json& j, const EvaluateCmd& c) {
    j = json{{"command", "evaluate"},
             {"pred", c.pred},
             {"truth", c.truth},
             {"out", c.out_dir},
             {"aggregate", c.aggregate}};
}

void from_json(const json& j, EvaluateCmd& c) {
    c.pred = j.value("pred", c.pred);
    c.truth = j.value("truth", c.truth);
    c.out_dir = j.value("out", c.out_dir);
    c.aggregate = j.value("aggregate", c.aggregate);
}

void to_json(json& j, const GradcheckCmd& c) { j = json{{"command", "gradcheck"}, {"seed", c.seed}}; }

void from_json(const json& j, GradcheckCmd& c) { c.seed = j.value("seed", c.seed); }

// --- helpers -------------------------------------------------------------------

namespace {

void write_config_echo(const std::string& out_dir, const json& j) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / "config.json");
    if (!f) throw FormatError("cannot write config echo in " + out_dir);
    f << j.dump(2) << "\n";
}

struct Subject {
    MultimodalVolume volume;  // normalized
    LabelVolume labels;
};

Subject load_training_subject(const std::string& dir, int classes) {
    Subject s;
    s.volume = normalize(load_volume(dir));
    s.labels = load_labels(dir);
    if (s.labels.dims != s.volume.dims)
        throw FormatError("labels dims differ from scans in " + dir);
    label_histogram(s.labels, classes);  // validates the label range
    return s;
}

}  // namespace

// --- commands --------------------------------------------------------------------

int cmd_phantom(const PhantomCmd& cmd, std::ostream& console) {
    if (cmd.out_dir.empty()) throw UsageError("phantom: --out is required");
    PhantomSpec spec;
    spec.dims = cmd.dims;
    spec.spacing_mm = cmd.spacing;
    spec.subject_id = cmd.subject_id;
    auto [vol, labels] = generate_phantom(spec, cmd.seed);
    save_subject(cmd.out_dir, vol, &labels);
    write_config_echo(cmd.out_dir, json(cmd));

    auto hist = label_histogram(labels, 4);
    console << "phantom subject '" << cmd.subject_id << "' -> " << cmd.out_dir << "\n";
    for (int c = 0; c < 4; ++c)
        console << "  class " << c << ": " << hist[c] << " voxels\n";
    return 0;
}

int cmd_train(const TrainCmd& cmd, std::ostream& console) {
    if (cmd.out_dir.empty()) throw UsageError("train: --out is required");
    if (cmd.subjects.empty()) throw UsageError("train: at least one --subject is required");
    cmd.model.validate();

    std::vector<Patch3D> dataset;
    const long n_subjects = static_cast<long>(cmd.subjects.size());
    for (long s = 0; s < n_subjects; ++s) {
        Subject subject = load_training_subject(cmd.subjects[s], cmd.model.classes);
        long share = cmd.patches_per_class / n_subjects +
                     (s < cmd.patches_per_class % n_subjects ? 1 : 0);
        SamplingPlan plan = balanced_plan(share, cmd.model.classes,
                                          derive_seed(cmd.seed, 100 + static_cast<std::uint32_t>(s)));
        auto patches = sample_training_set(subject.volume, subject.labels, plan, cmd.model.omega,
                                           cmd.model.slices, &console);
        dataset.insert(dataset.end(), std::make_move_iterator(patches.begin()),
                       std::make_move_iterator(patches.end()));
    }
    if (dataset.empty()) throw UsageError("train: sampling produced no patches");

    ModelParams<float> params = init_model<float>(cmd.model, cmd.seed);
    auto tensors = collect_params(params);
    AdadeltaState<float> optimizer = adadelta_init(tensors);

    fs::create_directories(cmd.out_dir);
    std::ofstream log_file(fs::path(cmd.out_dir) / "train.log");
    if (!log_file) throw FormatError("cannot write train.log in " + cmd.out_dir);
    log_file << "dataset patches=" << dataset.size() << " classes=" << cmd.model.classes
             << " seed=" << cmd.seed << "\n";

    TrainOptions options;
    options.epochs = cmd.epochs;
    options.batch_size = cmd.batch_size;
    options.seed = cmd.seed;
    options.target_accuracy = cmd.target_accuracy;
    options.log = &log_file;

    auto start = std::chrono::steady_clock::now();
    TrainResult result;
    if (cmd.epochs > 0) result = train_model(params, optimizer, dataset, options);
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::string ckpt = (fs::path(cmd.out_dir) / "model.ckpt").string();
    save_checkpoint(ckpt, params, cmd.save_optimizer ? &optimizer : nullptr);
    write_config_echo(cmd.out_dir, json(cmd));

    console << "trained on " << dataset.size() << " patches, " << result.steps_taken
            << " steps in " << seconds << " s\n";
    if (!result.epochs.empty())
        console << "final: loss=" << result.epochs.back().mean_loss
                << " acc=" << result.final_accuracy << "\n";
    console << "checkpoint: " << ckpt << "\n";
    return 0;
}

int cmd_predict(const PredictCmd& cmd, std::ostream& console) {
    if (cmd.checkpoint.empty() || cmd.subject.empty() || cmd.out_dir.empty())
        throw UsageError("predict: --model, --subject and --out are required");
    if (!fs::exists(cmd.checkpoint))
        throw UsageError("predict: checkpoint not found: " + cmd.checkpoint);
    if (!fs::exists(cmd.subject))
        throw UsageError("predict: subject not found: " + cmd.subject);

    ModelParams<float> params = load_checkpoint(cmd.checkpoint);
    MultimodalVolume raw = load_volume(cmd.subject);
    MultimodalVolume vol = normalize(raw);

    BboxMode mode;
    if (cmd.bbox_mode == "full") mode = BboxMode::full;
    else if (cmd.bbox_mode == "flair_threshold" || cmd.bbox_mode == "flair")
        mode = BboxMode::flair_threshold;
    else if (cmd.bbox_mode == "provided_mask" || cmd.bbox_mode == "mask")
        mode = BboxMode::provided_mask;
    else throw UsageError("predict: unknown bbox mode '" + cmd.bbox_mode + "'");

    std::vector<std::uint8_t> mask;
    if (mode == BboxMode::provided_mask) {
        if (cmd.mask_path.empty()) throw UsageError("predict: provided_mask needs --mask");
        LabelVolume mv = load_labels(cmd.mask_path);
        if (mv.dims != vol.dims) throw UsageError("predict: mask dims differ from subject");
        mask.resize(mv.labels.size());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mv.labels[i] != 0;
    }

    BoundingBox box = compute_bbox(vol, mode, cmd.margin, cmd.threshold_k,
                                   mask.empty() ? nullptr : &mask, &console);
    SegmentStats stats;
    LabelVolume pred = segment_volume(vol, params, box, cmd.workers, &stats);

    fs::create_directories(cmd.out_dir);
    save_labels(cmd.out_dir, pred, "prediction");
    write_config_echo(cmd.out_dir, json(cmd));

    for (const auto& spec : cmd.overlays) {
        auto colon = spec.find(':');
        if (colon == std::string::npos || colon + 1 >= spec.size() || colon != 1)
            throw UsageError("predict: overlay spec must be axis:index, got '" + spec + "'");
        char axis = spec[0];
        int index = std::stoi(spec.substr(colon + 1));
        std::string name = "overlay_" + std::string(1, axis) + spec.substr(colon + 1) + ".ppm";
        export_overlay(raw, pred, axis, index, (fs::path(cmd.out_dir) / name).string());
    }

    console << "segmented " << vol.voxel_count() << " voxels: " << stats.network_calls
            << " network calls, " << stats.zero_skipped << " zero-skipped, "
            << stats.outside_box << " outside box, " << stats.seconds << " s\n";
    console << "prediction: " << (fs::path(cmd.out_dir) / "prediction.mvol.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const EvaluateCmd& cmd, std::ostream& console) {
    if (cmd.out_dir.empty()) throw UsageError("evaluate: --out is required");
    if (cmd.pred.empty() || cmd.pred.size() != cmd.truth.size())
        throw UsageError("evaluate: --pred and --truth must pair up");

    fs::create_directories(cmd.out_dir);
    std::vector<MetricsReport> reports;
    for (std::size_t i = 0; i < cmd.pred.size(); ++i) {
        LabelVolume pred = load_labels(cmd.pred[i]);
        LabelVolume truth = load_labels(cmd.truth[i]);
        if (pred.dims != truth.dims)
            throw UsageError("evaluate: dims of " + cmd.pred[i] + " and " + cmd.truth[i] +
                             " differ");
        MetricsReport report = evaluate(pred, truth, truth.spacing_mm);
        report.subject = cmd.truth[i];
        std::string name = cmd.pred.size() == 1 ? "report.json"
                                                : "report_" + std::to_string(i) + ".json";
        std::ofstream f(fs::path(cmd.out_dir) / name);
        f << report_to_json(report) << "\n";
        console << "subject " << i << ":";
        for (int r = 0; r < 3; ++r) {
            const auto& s = report.regions[r];
            console << " " << region_name(static_cast<Region>(r)) << " dsc=";
            if (s.dsc) console << *s.dsc;
            else console << "n/a";
        }
        console << "\n";
        reports.push_back(std::move(report));
    }
    if (cmd.aggregate || reports.size() > 1) {
        std::ofstream f(fs::path(cmd.out_dir) / "aggregate.json");
        f << aggregate_to_json(reports) << "\n";
    }
    write_config_echo(cmd.out_dir, json(cmd));
    return 0;
}

int cmd_gradcheck(const GradcheckCmd& cmd, std::ostream& console) {
    auto entries = run_gradcheck(cmd.seed, &console);
    return gradcheck_passed(entries) ? 0 : 3;
}

}  // namespace p3d2d
