#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "p3d2d/commands.hpp"
#include "p3d2d/errors.hpp"

using nlohmann::json;

namespace {

// Exit codes: 0 success, 1 usage, 2 data/format, 3 verification failure.
int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const p3d2d::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const p3d2d::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const p3d2d::IndexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const p3d2d::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

// Optional JSON config file; explicitly passed flags override its values, so
// it is applied to the bound structs before CLI11 parses argv.
template <typename Cmd>
void apply_config_file(int argc, char** argv, const std::string& subcommand, Cmd& cmd) {
    bool in_sub = false;
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (!in_sub) {
            if (arg == subcommand) in_sub = true;
            continue;
        }
        if (arg == "--config" && i + 1 < argc) {
            config_path = argv[i + 1];
            break;
        }
        if (arg.rfind("--config=", 0) == 0) {
            config_path = arg.substr(9);
            break;
        }
    }
    if (config_path.empty()) return;
    std::ifstream f(config_path);
    if (!f) throw p3d2d::FormatError("cannot open config file " + config_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw p3d2d::FormatError("bad JSON in " + config_path + ": " + e.what());
    }
    cmd = j.get<Cmd>();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pixel-wise multimodal volume segmentation via 3D-to-2D patch conversion"};
    app.require_subcommand(1);

    p3d2d::PhantomCmd phantom;
    p3d2d::TrainCmd train;
    p3d2d::PredictCmd predict;
    p3d2d::EvaluateCmd evaluate;
    p3d2d::GradcheckCmd gradcheck;
    std::string config_placeholder;

    CLI::App* ph = app.add_subcommand("phantom", "Generate a synthetic subject directory");
    ph->add_option("--out", phantom.out_dir, "Output subject directory")->required(false);
    ph->add_option("--dims", phantom.dims, "Volume extents D H W (each >= 32)")->expected(3);
    ph->add_option("--spacing", phantom.spacing, "Voxel spacing mm (z y x)")->expected(3);
    ph->add_option("--seed", phantom.seed, "RNG seed");
    ph->add_option("--subject-id", phantom.subject_id, "Subject identifier");
    ph->add_option("--config", config_placeholder, "JSON config file (flags override)");

    CLI::App* tr = app.add_subcommand("train", "Train a model on subject directories");
    tr->add_option("--subject", train.subjects, "Subject directory (repeatable)");
    tr->add_option("--out", train.out_dir, "Output directory for checkpoint and logs");
    tr->add_option("--epochs", train.epochs, "Training epochs");
    tr->add_option("--batch", train.batch_size, "Mini-batch size");
    tr->add_option("--patches-per-class", train.patches_per_class,
                   "Total patches per class across subjects");
    tr->add_option("--seed", train.seed, "RNG seed");
    tr->add_option("--target-accuracy", train.target_accuracy,
                   "Stop when training accuracy reaches this value");
    tr->add_flag("--save-optimizer,!--no-save-optimizer", train.save_optimizer,
                 "Store optimizer state in the checkpoint");
    tr->add_option("--omega", train.model.omega, "In-plane patch extent");
    tr->add_option("--slices", train.model.slices, "Through-plane patch extent");
    tr->add_option("--reduction", train.model.reduction, "Excitation reduction ratio");
    tr->add_option("--conv-out", train.model.conv_out, "Bottleneck maps per modality");
    tr->add_option("--classes", train.model.classes, "Number of tissue classes");
    tr->add_option("--dropout", train.model.dropout, "Dropout probability");
    tr->add_flag("--se,!--no-se", train.model.se_enabled, "Enable slice calibration");
    tr->add_option("--widths", train.model.conv_widths, "Six conv widths")->expected(6);
    tr->add_option("--fc1", train.model.fc1, "First dense width");
    tr->add_option("--fc2", train.model.fc2, "Second dense width");
    tr->add_option("--config", config_placeholder, "JSON config file (flags override)");

    CLI::App* pr = app.add_subcommand("predict", "Segment a subject with a trained checkpoint");
    pr->add_option("--model", predict.checkpoint, "Checkpoint path");
    pr->add_option("--subject", predict.subject, "Subject directory");
    pr->add_option("--out", predict.out_dir, "Output directory");
    pr->add_option("--bbox", predict.bbox_mode, "full | flair_threshold | provided_mask");
    pr->add_option("--mask", predict.mask_path, "Mask container for provided_mask mode");
    pr->add_option("--margin", predict.margin, "Box dilation in voxels");
    pr->add_option("--threshold-k", predict.threshold_k, "FLAIR threshold: mean + k*sigma");
    pr->add_option("--workers", predict.workers, "Parallel workers");
    pr->add_option("--overlay", predict.overlays, "Overlay slice axis:index (repeatable)");
    pr->add_option("--config", config_placeholder, "JSON config file (flags override)");

    CLI::App* ev = app.add_subcommand("evaluate", "Score predictions against ground truth");
    ev->add_option("--pred", evaluate.pred, "Predicted label container or directory (repeatable)");
    ev->add_option("--truth", evaluate.truth, "Ground-truth container or directory (repeatable)");
    ev->add_option("--out", evaluate.out_dir, "Report output directory");
    ev->add_flag("--aggregate", evaluate.aggregate, "Also write the cross-subject aggregate");
    ev->add_option("--config", config_placeholder, "JSON config file (flags override)");

    CLI::App* gc = app.add_subcommand("gradcheck", "Run the 64-bit gradient verification suite");
    gc->add_option("--seed", gradcheck.seed, "RNG seed");
    gc->add_option("--config", config_placeholder, "JSON config file (flags override)");

    return guarded([&]() -> int {
        apply_config_file(argc, argv, "phantom", phantom);
        apply_config_file(argc, argv, "train", train);
        apply_config_file(argc, argv, "predict", predict);
        apply_config_file(argc, argv, "evaluate", evaluate);
        apply_config_file(argc, argv, "gradcheck", gradcheck);
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? 0 : 1;
        }
        if (ph->parsed()) return p3d2d::cmd_phantom(phantom, std::cout);
        if (tr->parsed()) return p3d2d::cmd_train(train, std::cout);
        if (pr->parsed()) return p3d2d::cmd_predict(predict, std::cout);
        if (ev->parsed()) return p3d2d::cmd_evaluate(evaluate, std::cout);
        if (gc->parsed()) return p3d2d::cmd_gradcheck(gradcheck, std::cout);
        return 1;
    });
}
