#pragma once

#include <iosfwd>
#include <vector>

#include "p3d2d/classifier.hpp"
#include "p3d2d/optimizer.hpp"
#include "p3d2d/sampling.hpp"

// Epochs of shuffled mini-batches; gradients are averaged over each batch
// (mean, not sum) before one ADADELTA step. Accuracy is measured after each
// epoch with an evaluation-mode pass over the training set.

namespace p3d2d {

struct TrainOptions {
    int epochs = 20;
    int batch_size = 32;
    std::uint32_t seed = 1;
    // stop once training accuracy reaches this value; > 1 disables the stop
    double target_accuracy = 2.0;
    std::ostream* log = nullptr;  // one structured line per epoch
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double accuracy = 0.0;
    int steps_total = 0;  // optimizer steps taken so far
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    int steps_taken = 0;
    double final_accuracy = 0.0;
};

double training_accuracy(ModelParams<float>& params, const std::vector<Patch3D>& data);

TrainResult train_model(ModelParams<float>& params, AdadeltaState<float>& optimizer,
                        const std::vector<Patch3D>& data, const TrainOptions& options);

}  // namespace p3d2d
