#include "dgat/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "dgat/rng.hpp"

namespace dgat {

FoldPlan make_folds(const std::vector<int>& labels, std::size_t k, std::uint64_t plan_seed) {
    if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
    std::vector<std::vector<std::size_t>> by_class(2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::invalid_argument("make_folds: label not in {0,1}");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (int c = 0; c < 2; ++c)
        if (by_class[c].size() < k)
            throw std::invalid_argument("make_folds: class " + std::to_string(c) +
                                        " has fewer members than k");

    Rng rng(plan_seed);
    FoldPlan plan;
    plan.k = k;
    plan.plan_seed = plan_seed;
    plan.folds.assign(k, {});

    // Remainder folds rotate across classes so total fold sizes stay balanced.
    std::size_t offset = 0;
    for (int c = 0; c < 2; ++c) {
        auto& members = by_class[c];
        rng.shuffle(members);
        std::size_t q = members.size() / k, r = members.size() % k;
        std::size_t pos = 0;
        for (std::size_t f = 0; f < k; ++f) {
            std::size_t take = q + (((f + k - offset) % k) < r ? 1 : 0);
            for (std::size_t i = 0; i < take; ++i) plan.folds[f].push_back(members[pos++]);
        }
        offset = (offset + r) % k;
    }
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> inner_split(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double val_fraction,
    std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("inner_split: val_fraction must be in (0,1)");
    std::vector<std::vector<std::size_t>> by_class(2);
    for (std::size_t idx : pool) by_class[static_cast<std::size_t>(labels[idx])].push_back(idx);
    Rng rng(seed);
    std::vector<std::size_t> train, val;
    for (int c = 0; c < 2; ++c) {
        auto& members = by_class[c];
        if (members.size() < 2)
            throw std::invalid_argument("inner_split: class " + std::to_string(c) +
                                        " needs at least 2 pool members");
        rng.shuffle(members);
        std::size_t n_val = static_cast<std::size_t>(
            std::lround(val_fraction * static_cast<double>(members.size())));
        n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
        for (std::size_t i = 0; i < members.size(); ++i)
            (i < n_val ? val : train).push_back(members[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

EnsembleDecision ensemble_predict(const std::vector<std::array<double, 2>>& seed_probs) {
    if (seed_probs.empty()) throw std::invalid_argument("ensemble_predict: no seed predictions");
    int votes1 = 0;
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& p : seed_probs) {
        if (p[1] > p[0]) ++votes1;
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= static_cast<double>(seed_probs.size());
    mean[1] /= static_cast<double>(seed_probs.size());
    int label = (2 * votes1 > static_cast<int>(seed_probs.size())) ? 1 : 0;
    return {label, mean};
}

namespace {

// Mann-Whitney AUC with mid-ranks for ties.
double rank_auc(const std::vector<int>& truth, const std::vector<double>& score) {
    std::vector<std::size_t> order(truth.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(truth.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    std::size_t n1 = 0;
    for (std::size_t t = 0; t < truth.size(); ++t)
        if (truth[t] == 1) {
            rank_sum_pos += rank[t];
            ++n1;
        }
    std::size_t n0 = truth.size() - n1;
    return (rank_sum_pos - 0.5 * static_cast<double>(n1 * (n1 + 1))) /
           (static_cast<double>(n0) * static_cast<double>(n1));
}

struct ClassStats {
    double precision, recall, f1;
};

ClassStats class_stats(const std::vector<int>& truth, const std::vector<int>& pred, int cls) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (pred[i] == cls && truth[i] == cls) tp += 1.0;
        if (pred[i] == cls && truth[i] != cls) fp += 1.0;
        if (pred[i] != cls && truth[i] == cls) fn += 1.0;
    }
    double prec = (tp + fp > 0) ? tp / (tp + fp) : 0.0;
    double rec = (tp + fn > 0) ? tp / (tp + fn) : 0.0;
    double f1 = (prec + rec > 0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
    return {prec, rec, f1};
}

}  // namespace

Metrics compute_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                        const std::vector<double>& mean_case_prob, const std::string& averaging) {
    if (truth.empty() || truth.size() != pred.size() || truth.size() != mean_case_prob.size())
        throw std::invalid_argument("compute_metrics: size mismatch");
    Metrics m;
    m.balanced_accuracy = balanced_accuracy(truth, pred);
    ClassStats c0 = class_stats(truth, pred, 0);
    ClassStats c1 = class_stats(truth, pred, 1);
    m.precision_pos = c1.precision;
    m.recall_pos = c1.recall;
    m.f1_pos = c1.f1;
    if (averaging == "macro") {
        m.precision = 0.5 * (c0.precision + c1.precision);
        m.recall = 0.5 * (c0.recall + c1.recall);
        m.f1 = 0.5 * (c0.f1 + c1.f1);
    } else if (averaging == "positive") {
        m.precision = c1.precision;
        m.recall = c1.recall;
        m.f1 = c1.f1;
    } else {
        throw std::invalid_argument("compute_metrics: unknown averaging '" + averaging + "'");
    }
    std::size_t n1 = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
    if (n1 > 0 && n1 < truth.size()) {
        m.auc = rank_auc(truth, mean_case_prob);
        m.auc_defined = true;
    }
    return m;
}

namespace {

struct SeedJobResult {
    std::vector<std::array<double, 2>> test_probs;  // per test subject
    std::vector<SubjectTrace> test_traces;
    std::vector<EpochPoint> curve;
    std::size_t best_epoch = 0;
};

SubjectTrace mean_trace(const std::vector<const SubjectTrace*>& traces) {
    SubjectTrace out;
    const SubjectTrace& first = *traces[0];
    double inv = 1.0 / static_cast<double>(traces.size());
    out.beta = Tensor::zeros_like(first.beta);
    for (const auto* tr : traces)
        for (std::size_t i = 0; i < out.beta.size(); ++i) out.beta[i] += tr->beta[i] * inv;
    out.windows.resize(first.windows.size());
    for (std::size_t w = 0; w < first.windows.size(); ++w) {
        auto& rec = out.windows[w];
        rec.pool_weights = Tensor::zeros_like(first.windows[w].pool_weights);
        for (std::size_t l = 0; l < first.windows[w].alpha.size(); ++l)
            rec.alpha.push_back(Tensor::zeros_like(first.windows[w].alpha[l]));
        for (const auto* tr : traces) {
            for (std::size_t i = 0; i < rec.pool_weights.size(); ++i)
                rec.pool_weights[i] += tr->windows[w].pool_weights[i] * inv;
            for (std::size_t l = 0; l < rec.alpha.size(); ++l)
                for (std::size_t i = 0; i < rec.alpha[l].size(); ++i)
                    rec.alpha[l][i] += tr->windows[w].alpha[l][i] * inv;
        }
    }
    return out;
}

}  // namespace

CvResult run_cv(const Dataset& ds, const WindowConfig& wcfg, const GraphConfig& gcfg,
                const ModelConfig& mcfg, const TrainConfig& tcfg, const CvConfig& ccfg,
                const FoldPlan* shared_plan) {
    std::vector<int> labels;
    for (const auto& s : ds.subjects) labels.push_back(s.label);

    CvResult result;
    result.plan = shared_plan ? *shared_plan : make_folds(labels, ccfg.k, ccfg.plan_seed);
    const FoldPlan& plan = result.plan;

    // Graph extraction is shared by every fold and seed.
    std::vector<DynamicGraphSequence> seqs;
    seqs.reserve(ds.subjects.size());
    for (const auto& s : ds.subjects)
        seqs.push_back(ccfg.use_static_fc ? static_fc(s, gcfg) : extract_sequence(s, wcfg, gcfg));

    ModelConfig model_cfg = mcfg;
    model_cfg.n_rois = ds.n_rois;

    std::size_t n_folds = plan.folds.size();
    std::size_t n_seeds = ccfg.seeds.size();

    // Per-fold splits, computed up front so jobs are independent.
    std::vector<std::vector<std::size_t>> fold_train(n_folds), fold_val(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
        std::vector<std::size_t> pool;
        for (std::size_t g = 0; g < n_folds; ++g)
            if (g != f) pool.insert(pool.end(), plan.folds[g].begin(), plan.folds[g].end());
        std::tie(fold_train[f], fold_val[f]) =
            inner_split(pool, labels, ccfg.val_fraction, mix_seed(plan.plan_seed, f + 1));
    }

    std::vector<std::vector<SeedJobResult>> job_results(n_folds,
                                                        std::vector<SeedJobResult>(n_seeds));
    std::atomic<std::size_t> next_job{0};
    std::mutex err_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            std::size_t job = next_job.fetch_add(1);
            if (job >= n_folds * n_seeds) return;
            std::size_t f = job / n_seeds;
            std::size_t s = job % n_seeds;
            try {
                std::uint64_t replica_seed = mix_seed(ccfg.seeds[s], f * 7919 + 1);
                Model model(model_cfg, replica_seed);
                std::vector<const DynamicGraphSequence*> train_seqs, val_seqs;
                for (std::size_t idx : fold_train[f]) train_seqs.push_back(&seqs[idx]);
                for (std::size_t idx : fold_val[f]) val_seqs.push_back(&seqs[idx]);
                TrainConfig tc = tcfg;
                tc.rng_seed = replica_seed;
                TrainedModel trained = train_model(model, train_seqs, val_seqs, tc);

                SeedJobResult& out = job_results[f][s];
                out.curve = trained.curve;
                out.best_epoch = trained.best_epoch;
                for (std::size_t idx : plan.folds[f]) {
                    SubjectTrace trace;
                    Tensor probs = predict_probs(model, seqs[idx], &trace);
                    out.test_probs.push_back({probs[0], probs[1]});
                    out.test_traces.push_back(std::move(trace));
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty())
                    first_error = "fold " + std::to_string(f) + " seed " +
                                  std::to_string(ccfg.seeds[s]) + ": " + e.what();
                return;
            }
        }
    };

    std::size_t n_threads = std::max<std::size_t>(1, std::min(ccfg.jobs, n_folds * n_seeds));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (!first_error.empty()) throw std::runtime_error("run_cv failed at " + first_error);

    for (std::size_t f = 0; f < n_folds; ++f) {
        FoldReport rep;
        rep.fold = f;
        rep.test_indices = plan.folds[f];
        rep.train_indices = fold_train[f];
        rep.val_indices = fold_val[f];
        std::vector<std::string> test_ids;
        std::vector<SubjectTrace> mean_traces;
        for (std::size_t t = 0; t < plan.folds[f].size(); ++t) {
            std::size_t idx = plan.folds[f][t];
            rep.truth.push_back(labels[idx]);
            test_ids.push_back(ds.subjects[idx].id);
            std::vector<std::array<double, 2>> seed_probs;
            std::vector<int> votes;
            std::vector<const SubjectTrace*> traces;
            for (std::size_t s = 0; s < n_seeds; ++s) {
                seed_probs.push_back(job_results[f][s].test_probs[t]);
                votes.push_back(seed_probs.back()[1] > seed_probs.back()[0] ? 1 : 0);
                traces.push_back(&job_results[f][s].test_traces[t]);
            }
            EnsembleDecision dec = ensemble_predict(seed_probs);
            rep.probs.push_back(std::move(seed_probs));
            rep.seed_votes.push_back(std::move(votes));
            rep.ensemble_labels.push_back(dec.label);
            rep.mean_case_prob.push_back(dec.mean_prob[1]);
            mean_traces.push_back(mean_trace(traces));
        }
        rep.metrics = compute_metrics(rep.truth, rep.ensemble_labels, rep.mean_case_prob,
                                      ccfg.averaging);
        rep.attention = aggregate_attention(test_ids, mean_traces);
        for (std::size_t s = 0; s < n_seeds; ++s) {
            rep.curves.push_back(job_results[f][s].curve);
            rep.best_epochs.push_back(job_results[f][s].best_epoch);
        }
        result.folds.push_back(std::move(rep));
    }

    result.summary = summarize(result.folds);
    audit_no_leakage(result, ds.subjects.size());
    return result;
}

void audit_no_leakage(const CvResult& result, std::size_t n_subjects) {
    std::vector<int> seen(n_subjects, 0);
    for (const auto& rep : result.folds) {
        std::vector<int> in_test(n_subjects, 0);
        for (std::size_t idx : rep.test_indices) {
            if (idx >= n_subjects) throw std::runtime_error("leakage audit: index out of range");
            in_test[idx] = 1;
            ++seen[idx];
        }
        for (std::size_t idx : rep.train_indices)
            if (in_test[idx])
                throw std::runtime_error("leakage: subject " + std::to_string(idx) +
                                         " of fold " + std::to_string(rep.fold) +
                                         " appears in its training split");
        for (std::size_t idx : rep.val_indices)
            if (in_test[idx])
                throw std::runtime_error("leakage: subject " + std::to_string(idx) +
                                         " of fold " + std::to_string(rep.fold) +
                                         " appears in its validation split");
        if (rep.train_indices.size() + rep.val_indices.size() + rep.test_indices.size() !=
            n_subjects)
            throw std::runtime_error("leakage audit: fold " + std::to_string(rep.fold) +
                                     " splits do not partition the dataset");
    }
    for (std::size_t i = 0; i < n_subjects; ++i)
        if (seen[i] != 1)
            throw std::runtime_error("leakage audit: subject " + std::to_string(i) +
                                     " is not in exactly one test fold");
}

namespace {

template <class Get>
std::pair<double, double> mean_sd(const std::vector<FoldReport>& folds, Get get) {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(get(f));
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return {mean, sd};
}

}  // namespace

CvSummary summarize(const std::vector<FoldReport>& folds) {
    if (folds.empty()) throw std::invalid_argument("summarize: no folds");
    CvSummary s;
    auto set = [&](double Metrics::*field, auto get) {
        auto [m, sd] = mean_sd(folds, get);
        s.mean.*field = m;
        s.sd.*field = sd;
    };
    set(&Metrics::balanced_accuracy, [](const FoldReport& f) { return f.metrics.balanced_accuracy; });
    set(&Metrics::precision, [](const FoldReport& f) { return f.metrics.precision; });
    set(&Metrics::recall, [](const FoldReport& f) { return f.metrics.recall; });
    set(&Metrics::f1, [](const FoldReport& f) { return f.metrics.f1; });
    set(&Metrics::precision_pos, [](const FoldReport& f) { return f.metrics.precision_pos; });
    set(&Metrics::recall_pos, [](const FoldReport& f) { return f.metrics.recall_pos; });
    set(&Metrics::f1_pos, [](const FoldReport& f) { return f.metrics.f1_pos; });

    std::vector<double> aucs;
    for (const auto& f : folds)
        if (f.metrics.auc_defined) aucs.push_back(f.metrics.auc);
    if (!aucs.empty()) {
        double mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
        double var = 0.0;
        for (double x : aucs) var += (x - mean) * (x - mean);
        s.mean.auc = mean;
        s.sd.auc = aucs.size() > 1 ? std::sqrt(var / static_cast<double>(aucs.size() - 1)) : 0.0;
        s.mean.auc_defined = true;
        s.sd.auc_defined = true;
    }
    return s;
}

namespace {

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j{{"balanced_accuracy", m.balanced_accuracy},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"precision_pos", m.precision_pos},
                     {"recall_pos", m.recall_pos},
                     {"f1_pos", m.f1_pos}};
    if (m.auc_defined)
        j["auc"] = m.auc;
    else
        j["auc"] = nullptr;
    return j;
}

}  // namespace

void write_summary_json(const CvResult& result, const std::string& path) {
    nlohmann::json j;
    j["k"] = result.plan.k;
    j["plan_seed"] = result.plan.plan_seed;
    j["sd_convention"] = "sample standard deviation (n-1) across folds";
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : result.folds) {
        folds.push_back({{"fold", f.fold},
                         {"test_indices", f.test_indices},
                         {"metrics", metrics_to_json(f.metrics)},
                         {"best_epochs", f.best_epochs}});
    }
    j["folds"] = std::move(folds);
    j["aggregate"] = {{"mean", metrics_to_json(result.summary.mean)},
                      {"sd", metrics_to_json(result.summary.sd)}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write summary: " + path);
    out << j.dump(2) << '\n';
}

void write_predictions_csv(const CvResult& result, const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write predictions: " + path);
    out << "subject,fold,truth,seed_votes,ensemble,mean_case_prob\n";
    char buf[32];
    for (const auto& f : result.folds) {
        for (std::size_t t = 0; t < f.test_indices.size(); ++t) {
            out << ds.subjects[f.test_indices[t]].id << ',' << f.fold << ',' << f.truth[t] << ',';
            for (std::size_t s = 0; s < f.seed_votes[t].size(); ++s) {
                if (s) out << '|';
                out << f.seed_votes[t][s];
            }
            std::snprintf(buf, sizeof(buf), "%.17g", f.mean_case_prob[t]);
            out << ',' << f.ensemble_labels[t] << ',' << buf << '\n';
        }
    }
}

}  // namespace dgat
