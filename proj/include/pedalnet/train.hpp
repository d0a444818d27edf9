#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedalnet/network.hpp"
#include "pedalnet/synth.hpp"

namespace pedalnet::nn {

struct TrainConfig {
    int batch_size = 128;
    int patience = 10;
    int max_epochs = 200;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_acc = 0.0;
    double val_auc = 0.0;
};

struct TrainResult {
    Network<float> network;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_acc = 0.0;
    double best_val_auc = 0.0;
};

struct AdamState {
    std::vector<float> m, v;
};

// One bias-corrected Adam update; t is 1-based.
void adam_step(std::vector<float>& param, const std::vector<float>& grad, AdamState& state,
               int t, const TrainConfig& cfg);

// Source-task training: seeded stratified split, early stopping on validation
// accuracy, returns the best-validation checkpoint. With val_fraction 0 the
// loop runs max_epochs and returns the final state.
TrainResult train(const NetworkConfig& ncfg, const TrainConfig& tcfg,
                  const std::vector<synth::LabeledMel>& dataset);

// Target-task fine-tuning: conv and batch-norm parameters (including running
// stats) frozen, only the dense head trains, same early-stopping rule.
TrainResult retrain_head(const Network<float>& base, const TrainConfig& tcfg,
                         const std::vector<synth::LabeledMel>& dataset);

// Same, but on precomputed global-average-pool vectors (one row of
// base.config.channels() values per example). The frozen stack makes those a
// sufficient statistic, so callers that already extracted them skip the
// forward passes.
TrainResult retrain_head_gap(const Network<float>& base, const TrainConfig& tcfg,
                             const std::vector<std::vector<float>>& gaps,
                             const std::vector<int>& labels);

// Accuracy at a 0.5 threshold on the pedal-class probability, plus rank AUC.
std::pair<double, double> evaluate(const Network<float>& net,
                                   const std::vector<synth::LabeledMel>& dataset);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace pedalnet::nn
