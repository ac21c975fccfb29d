#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dgat/evaluation.hpp"
#include "dgat/rng.hpp"
#include "dgat/train.hpp"

using namespace dgat;

namespace {

ModelConfig tiny_config(std::size_t n_rois) {
    ModelConfig cfg;
    cfg.n_rois = n_rois;
    cfg.embed_dim = 6;
    cfg.gat_dims = {5, 5, 4};
    cfg.pool_hidden = 3;
    cfg.conv_filters = 7;
    cfg.conv_kernel = 3;
    cfg.attn_hidden = 4;
    cfg.cls_hidden = {5, 4};
    return cfg;
}

DynamicGraphSequence rand_seq(Rng& rng, std::size_t n, std::size_t T, int label,
                              const std::string& id) {
    DynamicGraphSequence seq;
    seq.subject_id = id;
    seq.label = label;
    for (std::size_t w = 0; w < T; ++w) {
        Tensor A({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            A.at(i, i) = 1.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                double v = rng.uniform() < 0.5 ? 1.0 : 0.0;
                A.at(i, j) = v;
                A.at(j, i) = v;
            }
        }
        seq.windows.push_back(WindowGraph{Tensor({n, n}), A});
    }
    return seq;
}

// Sequences whose graph topology encodes the label: class 1 gets a dense
// clique on the first half of nodes, class 0 on the second half.
DynamicGraphSequence labeled_seq(Rng& rng, std::size_t n, std::size_t T, int label,
                                 const std::string& id) {
    DynamicGraphSequence seq;
    seq.subject_id = id;
    seq.label = label;
    std::size_t half = n / 2;
    for (std::size_t w = 0; w < T; ++w) {
        Tensor A({n, n});
        for (std::size_t i = 0; i < n; ++i) A.at(i, i) = 1.0;
        std::size_t lo = label == 1 ? 0 : half;
        std::size_t hi = label == 1 ? half : n;
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = i + 1; j < hi; ++j) {
                A.at(i, j) = 1.0;
                A.at(j, i) = 1.0;
            }
        // sprinkle a couple of noise edges so graphs within a class differ
        for (int e = 0; e < 2; ++e) {
            std::size_t i = rng.index(n), j = rng.index(n);
            if (i != j) {
                A.at(i, j) = 1.0;
                A.at(j, i) = 1.0;
            }
        }
        seq.windows.push_back(WindowGraph{Tensor({n, n}), A});
    }
    return seq;
}

// O(n^2) pairwise probability-of-correct-ranking AUC, ties count 1/2.
double auc_oracle(const std::vector<int>& truth, const std::vector<double>& score) {
    double num = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (truth[i] != 1 || truth[j] != 0) continue;
            ++pairs;
            if (score[i] > score[j])
                num += 1.0;
            else if (score[i] == score[j])
                num += 0.5;
        }
    return num / pairs;
}

}  // namespace

TEST_CASE("class weights: inverse frequency, normalized to the two-class mean") {
    std::vector<int> labels{0, 0, 0, 1};
    auto w = class_weights(labels);
    CHECK(w[0] == doctest::Approx(4.0 / (2.0 * 3.0)).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(4.0 / (2.0 * 1.0)).epsilon(1e-12));
    // balanced classes give unit weights
    std::vector<int> bal{0, 1, 0, 1};
    auto wb = class_weights(bal);
    CHECK(wb[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(wb[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weighted ce: uniform probabilities give ln 2 with unit weights") {
    Tape t;
    std::vector<Tape::Var> probs{t.leaf(Tensor({2}, {0.5, 0.5})),
                                 t.leaf(Tensor({2}, {0.5, 0.5}))};
    Tape::Var loss = weighted_ce_loss(t, probs, {0, 1}, {1.0, 1.0});
    CHECK(t.val(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("weighted ce: matches a hand-computed weighted batch mean") {
    Tape t;
    std::vector<Tape::Var> probs{t.leaf(Tensor({2}, {0.8, 0.2})),
                                 t.leaf(Tensor({2}, {0.3, 0.7})),
                                 t.leaf(Tensor({2}, {0.6, 0.4}))};
    std::array<double, 2> w{1.5, 0.75};
    Tape::Var loss = weighted_ce_loss(t, probs, {0, 1, 1}, w);
    double expect = (-1.5 * std::log(0.8) - 0.75 * std::log(0.7) - 0.75 * std::log(0.4)) / 3.0;
    CHECK(t.val(loss)[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("weighted ce: gradient steps reduce the loss") {
    Rng rng(5);
    ModelConfig cfg = tiny_config(5);
    cfg.dropout_rates = {0.0, 0.0};  // isolate the optimizer from mask noise
    Model model(cfg, 17);
    auto s0 = rand_seq(rng, 5, 3, 0, "a");
    auto s1 = rand_seq(rng, 5, 3, 1, "b");
    AdamWConfig ocfg;
    ocfg.lr = 1e-3;
    ocfg.weight_decay = 0.0;
    AdamW opt(ocfg);
    Rng drng(99);
    auto batch_loss = [&](bool train) {
        Tape t;
        std::vector<Tape::Var> probs{model.forward(t, s0, train, &drng),
                                     model.forward(t, s1, train, &drng)};
        Tape::Var loss = weighted_ce_loss(t, probs, {0, 1}, {1.0, 1.0});
        double v = t.val(loss)[0];
        if (train) t.backward(loss);
        return v;
    };
    double before = 0, after = 0;
    {
        Tape t;
        std::vector<Tape::Var> probs{model.forward(t, s0, false, nullptr),
                                     model.forward(t, s1, false, nullptr)};
        before = t.val(weighted_ce_loss(t, probs, {0, 1}, {1.0, 1.0}))[0];
    }
    for (int step = 0; step < 40; ++step) {
        model.params().zero_grads();
        batch_loss(true);
        opt.step(model.params());
    }
    {
        Tape t;
        std::vector<Tape::Var> probs{model.forward(t, s0, false, nullptr),
                                     model.forward(t, s1, false, nullptr)};
        after = t.val(weighted_ce_loss(t, probs, {0, 1}, {1.0, 1.0}))[0];
    }
    CHECK(after < before);
}

TEST_CASE("balanced accuracy: worked confusion matrix") {
    // class 1: TP=3 FN=1 -> recall 0.75; class 0: TN=4 FP=2 -> specificity 4/6
    std::vector<int> truth{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<int> pred{1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
    CHECK(balanced_accuracy(truth, pred) ==
          doctest::Approx(0.5 * (0.75 + 4.0 / 6.0)).epsilon(1e-12));
}

TEST_CASE("folds: stratified 10-fold of a 116/78 cohort") {
    std::vector<int> labels;
    for (int i = 0; i < 116; ++i) labels.push_back(0);
    for (int i = 0; i < 78; ++i) labels.push_back(1);
    FoldPlan plan = make_folds(labels, 10, 7);
    REQUIRE(plan.folds.size() == 10);
    std::set<std::size_t> seen;
    for (const auto& fold : plan.folds) {
        CHECK(fold.size() >= 19);
        CHECK(fold.size() <= 20);
        std::size_t cases = 0;
        for (auto idx : fold) {
            CHECK(seen.insert(idx).second);  // partition: no repeats
            cases += labels[idx] == 1;
        }
        CHECK(cases >= 7);
        CHECK(cases <= 8);
    }
    CHECK(seen.size() == 194);
}

TEST_CASE("folds: deterministic in the plan seed") {
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 2);
    FoldPlan a = make_folds(labels, 5, 42);
    FoldPlan b = make_folds(labels, 5, 42);
    FoldPlan c = make_folds(labels, 5, 43);
    CHECK(a.folds == b.folds);
    CHECK(a.folds != c.folds);
}

TEST_CASE("folds: k equal to the class minimum still gives one case per fold") {
    std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    FoldPlan plan = make_folds(labels, 5, 3);
    for (const auto& fold : plan.folds) {
        REQUIRE(fold.size() == 2);
        CHECK((labels[fold[0]] + labels[fold[1]]) == 1);  // one of each class
    }
}

TEST_CASE("inner split: stratified, disjoint, at least one per class") {
    std::vector<int> labels;
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < 40; ++i) {
        labels.push_back(i < 25 ? 0 : 1);
        pool.push_back(i);
    }
    auto [train, val] = inner_split(pool, labels, 0.1, 11);
    CHECK(train.size() + val.size() == 40);
    std::set<std::size_t> tset(train.begin(), train.end());
    for (auto v : val) CHECK(tset.count(v) == 0);
    std::size_t val_cases = 0, val_ctrls = 0;
    for (auto v : val) (labels[v] == 1 ? val_cases : val_ctrls) += 1;
    CHECK(val_cases >= 1);
    CHECK(val_ctrls >= 1);
    CHECK(val.size() <= 6);  // ~10% of 40
}

TEST_CASE("ensemble: majority vote can disagree with the mean probability") {
    // three mild votes for class 0, two strong votes for class 1
    std::vector<std::array<double, 2>> probs{
        {0.6, 0.4}, {0.6, 0.4}, {0.6, 0.4}, {0.15, 0.85}, {0.15, 0.85}};
    EnsembleDecision d = ensemble_predict(probs);
    CHECK(d.label == 0);  // 3-2 vote
    CHECK(d.mean_prob[1] == doctest::Approx(0.58).epsilon(1e-12));  // mean leans class 1
}

TEST_CASE("metrics: worked example with macro and positive-class views") {
    std::vector<int> truth{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
    std::vector<int> pred{1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
    std::vector<double> score{0.9, 0.8, 0.7, 0.4, 0.2, 0.1, 0.3, 0.35, 0.6, 0.55};
    Metrics m = compute_metrics(truth, pred, score);
    CHECK(m.balanced_accuracy == doctest::Approx(0.5 * (0.75 + 4.0 / 6.0)).epsilon(1e-12));
    // positive class: precision 3/5, recall 3/4
    CHECK(m.precision_pos == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(m.recall_pos == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.f1_pos == doctest::Approx(2 * 0.6 * 0.75 / (0.6 + 0.75)).epsilon(1e-12));
    // macro is the mean of per-class scores; class 0: precision 4/5, recall 4/6
    double p0 = 0.8, r0 = 4.0 / 6.0, f0 = 2 * p0 * r0 / (p0 + r0);
    CHECK(m.precision == doctest::Approx(0.5 * (p0 + 0.6)).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.5 * (r0 + 0.75)).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(0.5 * (f0 + m.f1_pos)).epsilon(1e-12));
    REQUIRE(m.auc_defined);
    CHECK(m.auc == doctest::Approx(auc_oracle(truth, score)).epsilon(1e-12));
}

TEST_CASE("metrics: rank auc matches the pairwise oracle with ties") {
    Rng rng(19);
    std::vector<int> truth;
    std::vector<double> score;
    for (int i = 0; i < 30; ++i) {
        truth.push_back(rng.uniform() < 0.4 ? 1 : 0);
        // quantized scores produce ties on purpose
        score.push_back(std::round(rng.uniform() * 10.0) / 10.0);
    }
    if (std::count(truth.begin(), truth.end(), 1) == 0) truth[0] = 1;
    if (std::count(truth.begin(), truth.end(), 0) == 0) truth[1] = 0;
    std::vector<int> pred(truth.size(), 0);
    Metrics m = compute_metrics(truth, pred, score);
    REQUIRE(m.auc_defined);
    CHECK(m.auc == doctest::Approx(auc_oracle(truth, score)).epsilon(1e-12));
}

TEST_CASE("metrics: label-independent scores give auc near one half") {
    Rng rng(23);
    std::vector<int> truth;
    std::vector<double> score;
    for (int i = 0; i < 2000; ++i) {
        truth.push_back(i % 2);
        score.push_back(rng.uniform());
    }
    std::vector<int> pred(truth.size(), 0);
    Metrics m = compute_metrics(truth, pred, score);
    CHECK(std::fabs(m.auc - 0.5) < 0.05);
}

TEST_CASE("metrics: single-class fold leaves auc undefined") {
    std::vector<int> truth{1, 1, 1};
    std::vector<int> pred{1, 0, 1};
    std::vector<double> score{0.9, 0.2, 0.8};
    Metrics m = compute_metrics(truth, pred, score);
    CHECK_FALSE(m.auc_defined);
}

TEST_CASE("training: separable graphs are learned and runs are reproducible") {
    Rng rng(77);
    std::vector<DynamicGraphSequence> seqs;
    for (int i = 0; i < 12; ++i)
        seqs.push_back(labeled_seq(rng, 8, 3, i % 2, "s" + std::to_string(i)));
    std::vector<const DynamicGraphSequence*> train_set, val_set;
    for (int i = 0; i < 8; ++i) train_set.push_back(&seqs[i]);
    for (int i = 8; i < 12; ++i) val_set.push_back(&seqs[i]);

    TrainConfig tcfg;
    tcfg.lr = 3e-3;
    tcfg.batch_size = 4;
    tcfg.max_epochs = 60;
    tcfg.patience = 60;
    tcfg.min_epochs = 5;
    tcfg.rng_seed = 3;

    ModelConfig mcfg = tiny_config(8);
    mcfg.embed_dim = 8;
    mcfg.gat_dims = {8, 8, 8};
    mcfg.cls_hidden = {8, 4};
    mcfg.dropout_rates = {0.2, 0.2};
    Model m1(mcfg, 5);
    TrainedModel r1 = train_model(m1, train_set, val_set, tcfg);
    CHECK(r1.best_val_balacc == doctest::Approx(1.0));
    CHECK(r1.best_epoch >= 1);
    CHECK(r1.best_epoch <= r1.curve.size());
    // best_epoch is the earliest maximum of the validation curve
    double best = 0;
    std::size_t best_at = 0;
    for (std::size_t e = 0; e < r1.curve.size(); ++e)
        if (r1.curve[e].val_balacc > best) {
            best = r1.curve[e].val_balacc;
            best_at = e + 1;
        }
    CHECK(r1.best_epoch == best_at);
    CHECK(r1.best_val_balacc == doctest::Approx(best));

    // identical seeds give bitwise-identical training
    Model m2(mcfg, 5);
    TrainedModel r2 = train_model(m2, train_set, val_set, tcfg);
    REQUIRE(r1.curve.size() == r2.curve.size());
    for (std::size_t e = 0; e < r1.curve.size(); ++e) {
        CHECK(r1.curve[e].train_loss == r2.curve[e].train_loss);
        CHECK(r1.curve[e].val_balacc == r2.curve[e].val_balacc);
    }
    // restored weights reproduce the recorded best validation score
    std::vector<int> vtruth, vpred;
    for (const auto* s : val_set) {
        Tensor p = predict_probs(m1, *s);
        vtruth.push_back(s->label);
        vpred.push_back(p[1] > p[0] ? 1 : 0);
    }
    CHECK(balanced_accuracy(vtruth, vpred) == doctest::Approx(r1.best_val_balacc));
}

TEST_CASE("training: early stopping respects patience and min epochs") {
    Rng rng(31);
    std::vector<DynamicGraphSequence> seqs;
    for (int i = 0; i < 8; ++i)
        seqs.push_back(rand_seq(rng, 6, 2, i % 2, "s" + std::to_string(i)));  // unlearnable noise
    std::vector<const DynamicGraphSequence*> train_set, val_set;
    for (int i = 0; i < 6; ++i) train_set.push_back(&seqs[i]);
    for (int i = 6; i < 8; ++i) val_set.push_back(&seqs[i]);
    TrainConfig tcfg;
    tcfg.batch_size = 4;
    tcfg.max_epochs = 200;
    tcfg.patience = 6;
    tcfg.min_epochs = 10;
    tcfg.rng_seed = 1;
    Model m(tiny_config(6), 9);
    TrainedModel r = train_model(m, train_set, val_set, tcfg);
    CHECK(r.curve.size() >= 10);  // min_epochs honored
    // stopped within patience of the best once past the minimum
    CHECK(r.curve.size() <= std::max<std::size_t>(10, r.best_epoch + 6));
}
