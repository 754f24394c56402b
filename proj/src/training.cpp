#include "p3d2d/training.hpp"

#include <cstdio>
#include <ostream>
#include <random>

#include "p3d2d/rng.hpp"

namespace p3d2d {

double training_accuracy(ModelParams<float>& params, const std::vector<Patch3D>& data) {
    if (data.empty()) return 0.0;
    long correct = 0;
    for (const auto& sample : data)
        if (predict(sample.modalities, params) == sample.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_model(ModelParams<float>& params, AdadeltaState<float>& optimizer,
                        const std::vector<Patch3D>& data, const TrainOptions& options) {
    if (data.empty()) throw UsageError("training set is empty");
    if (options.batch_size < 1) throw UsageError("batch size must be >= 1");
    for (const auto& sample : data)
        if (sample.label < 0 || sample.label >= params.cfg.classes)
            throw UsageError("training sample label " + std::to_string(sample.label) +
                             " outside [0, " + std::to_string(params.cfg.classes) + ")");

    std::mt19937 shuffle_rng(derive_seed(options.seed, 0));
    std::mt19937 dropout_rng(derive_seed(options.seed, 1));

    auto tensors = collect_params(params);
    zero_all_grads(params);

    TrainResult result;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        shuffle_vec(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
            std::size_t end = std::min(order.size(), begin + options.batch_size);
            for (std::size_t i = begin; i < end; ++i) {
                const Patch3D& sample = data[order[i]];
                Tensor<float> l = loss(sample.modalities, sample.label, params, dropout_rng);
                loss_sum += l.item();
                backward(l);
            }
            scale_grads(tensors, 1.0f / static_cast<float>(end - begin));
            adadelta_step(tensors, optimizer);
            zero_all_grads(params);
            ++result.steps_taken;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(data.size());
        stats.accuracy = training_accuracy(params, data);
        stats.steps_total = result.steps_taken;
        result.epochs.push_back(stats);
        result.final_accuracy = stats.accuracy;
        if (options.log) {
            char line[128];
            std::snprintf(line, sizeof(line), "epoch=%d loss=%.6f acc=%.6f steps=%d\n", epoch,
                          stats.mean_loss, stats.accuracy, stats.steps_total);
            *options.log << line;
        }
        if (stats.accuracy >= options.target_accuracy) break;
    }
    return result;
}

}  // namespace p3d2d
