#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dgat/data_model.hpp"
#include "dgat/dfc.hpp"
#include "dgat/interpret.hpp"
#include "dgat/train.hpp"

namespace dgat {

struct FoldPlan {
    std::size_t k = 10;
    std::uint64_t plan_seed = 0;
    std::vector<std::vector<std::size_t>> folds;  // partition of subject indices
};

// Stratified k-fold split, deterministic in plan_seed. Per-fold class counts
// differ from an even split by at most one subject.
FoldPlan make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t plan_seed);

// Stratified inner validation split of a training pool.
// Returns (train_indices, val_indices); at least one subject per class in val.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> inner_split(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double val_fraction,
    std::uint64_t seed);

struct EnsembleDecision {
    int label;
    std::array<double, 2> mean_prob;
};

// Majority vote over per-seed argmax labels; probabilities averaged for AUC.
EnsembleDecision ensemble_predict(const std::vector<std::array<double, 2>>& seed_probs);

struct Metrics {
    double balanced_accuracy = 0.0;
    double precision = 0.0;  // macro by default, see averaging switch
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    bool auc_defined = false;
    // positive-class view, always computed alongside
    double precision_pos = 0.0;
    double recall_pos = 0.0;
    double f1_pos = 0.0;
};

// mean_case_prob is the ensemble-mean probability of class 1; AUC is the
// rank statistic with ties counted 0.5.
Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                        const std::vector<double>& mean_case_prob,
                        const std::string& averaging = "macro");

struct FoldReport {
    std::size_t fold = 0;
    std::vector<std::size_t> test_indices;
    std::vector<std::size_t> train_indices;  // inner training split
    std::vector<std::size_t> val_indices;    // inner validation split
    std::vector<int> truth;
    std::vector<std::vector<int>> seed_votes;               // [subject][seed]
    std::vector<std::vector<std::array<double, 2>>> probs;  // [subject][seed]
    std::vector<int> ensemble_labels;
    std::vector<double> mean_case_prob;
    Metrics metrics;
    AttentionAggregate attention;
    std::vector<std::vector<EpochPoint>> curves;  // per seed
    std::vector<std::size_t> best_epochs;
};

struct CvConfig {
    std::size_t k = 10;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::uint64_t plan_seed = 1234;
    double val_fraction = 0.1;
    bool use_static_fc = false;
    std::size_t jobs = 1;
    std::string averaging = "macro";
};

struct CvSummary {
    Metrics mean;
    Metrics sd;  // sample standard deviation (n-1) across folds
};

struct CvResult {
    FoldPlan plan;
    std::vector<FoldReport> folds;
    CvSummary summary;
};

// Full protocol: per fold, train one replica per seed, ensemble on the held-out
// fold, compute metrics, collect attention aggregates over test subjects.
CvResult run_cv(const Dataset& ds, const WindowConfig& wcfg, const GraphConfig& gcfg,
                const ModelConfig& mcfg, const TrainConfig& tcfg, const CvConfig& ccfg,
                const FoldPlan* shared_plan = nullptr);

// Throws if any test-fold subject leaks into its fold's train or val split.
void audit_no_leakage(const CvResult& result, std::size_t n_subjects);

CvSummary summarize(const std::vector<FoldReport>& folds);

void write_summary_json(const CvResult& result, const std::string& path);
void write_predictions_csv(const CvResult& result, const Dataset& ds, const std::string& path);

}  // namespace dgat
