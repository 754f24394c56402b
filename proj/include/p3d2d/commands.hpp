#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "p3d2d/classifier.hpp"

// Batch-experiment entry points behind the CLI subcommands. Each command
// echoes its resolved configuration (seed included) into its output directory
// so a run can be reproduced from the artifacts alone.

namespace p3d2d {

struct PhantomCmd {
    std::string out_dir;
    std::array<int, 3> dims{48, 48, 48};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::uint32_t seed = 1;
    std::string subject_id = "phantom";
};

struct TrainCmd {
    std::vector<std::string> subjects;
    std::string out_dir;
    ModelConfig model;
    int epochs = 20;
    int batch_size = 32;
    long patches_per_class = 320;
    std::uint32_t seed = 1;
    double target_accuracy = 2.0;  // > 1 disables early stop
    bool save_optimizer = true;
};

struct PredictCmd {
    std::string checkpoint;
    std::string subject;
    std::string out_dir;
    std::string bbox_mode = "flair_threshold";  // full | flair_threshold | provided_mask
    std::string mask_path;                      // labels container for provided_mask
    int margin = 3;
    double threshold_k = 1.5;
    int workers = 1;
    std::vector<std::string> overlays;  // axis:index, e.g. "z:24"
};

struct EvaluateCmd {
    std::vector<std::string> pred;   // label containers or subject directories
    std::vector<std::string> truth;  // matched pairwise with pred
    std::string out_dir;
    bool aggregate = false;
};

struct GradcheckCmd {
    std::uint32_t seed = 1;
};

void to_json(nlohmann::json& j, const PhantomCmd& c);
void from_json(const nlohmann::json& j, PhantomCmd& c);
void to_json(nlohmann::json& j, const TrainCmd& c);
void from_json(const nlohmann::json& j, TrainCmd& c);
void to_json(nlohmann::json& j, const PredictCmd& c);
void from_json(const nlohmann::json& j, PredictCmd& c);
void to_json(nlohmann::json& j, const EvaluateCmd& c);
void from_json(const nlohmann::json& j, EvaluateCmd& c);
void to_json(nlohmann::json& j, const GradcheckCmd& c);
void from_json(const nlohmann::json& j, GradcheckCmd& c);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

int cmd_phantom(const PhantomCmd& cmd, std::ostream& console);
int cmd_train(const TrainCmd& cmd, std::ostream& console);
int cmd_predict(const PredictCmd& cmd, std::ostream& console);
int cmd_evaluate(const EvaluateCmd& cmd, std::ostream& console);
int cmd_gradcheck(const GradcheckCmd& cmd, std::ostream& console);

}  // namespace p3d2d
