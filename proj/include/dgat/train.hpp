#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dgat/model.hpp"

namespace dgat {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 300;
    std::size_t patience = 100;
    std::size_t min_epochs = 40;
    std::uint64_t rng_seed = 0;
};

struct EpochPoint {
    double train_loss;
    double val_balacc;
};

struct TrainedModel {
    std::map<std::string, Tensor> best_params;  // snapshot at best validation epoch
    std::size_t best_epoch = 0;                 // 1-based
    double best_val_balacc = 0.0;
    std::vector<EpochPoint> curve;
};

// Per-class weights w_c = n_total / (2 * n_c) computed from a training split.
std::array<double, 2> class_weights(const std::vector<int>& labels);

// Mean over the batch of -w_{y_i} * log p_i[y_i]. Probabilities below 1e-12
// are clamped (with a warning to stderr).
Tape::Var weighted_ce_loss(Tape& tape, const std::vector<Tape::Var>& probs,
                           const std::vector<int>& labels, const std::array<double, 2>& weights);

// Eval-mode probabilities for one subject (deterministic).
Tensor predict_probs(Model& model, const DynamicGraphSequence& seq, SubjectTrace* trace = nullptr);

double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

// Trains a fresh model with AdamW, early stopping on validation balanced
// accuracy. Snapshot is taken at the earliest best-validation epoch.
TrainedModel train_model(Model& model, const std::vector<const DynamicGraphSequence*>& train_set,
                         const std::vector<const DynamicGraphSequence*>& val_set,
                         const TrainConfig& cfg);

void write_curve_csv(const std::vector<EpochPoint>& curve, const std::string& path);

}  // namespace dgat
