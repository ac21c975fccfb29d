#include "dgat/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dgat {

std::array<double, 2> class_weights(const std::vector<int>& labels) {
    double n0 = 0, n1 = 0;
    for (int y : labels) (y == 0 ? n0 : n1) += 1.0;
    if (n0 == 0 || n1 == 0)
        throw std::invalid_argument("class weights need both classes present");
    double n = n0 + n1;
    return {n / (2.0 * n0), n / (2.0 * n1)};
}

Tape::Var weighted_ce_loss(Tape& tape, const std::vector<Tape::Var>& probs,
                           const std::vector<int>& labels, const std::array<double, 2>& weights) {
    if (probs.empty() || probs.size() != labels.size())
        throw std::invalid_argument("weighted_ce_loss: batch size mismatch");
    Tape::Var total = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        int y = labels[i];
        if (y != 0 && y != 1) throw std::invalid_argument("weighted_ce_loss: label not in {0,1}");
        if (tape.val(probs[i])[static_cast<std::size_t>(y)] < 1e-12)
            std::fprintf(stderr, "warning: true-class probability clamped at 1e-12\n");
        Tape::Var p = tape.clamp_min(tape.pick(probs[i], static_cast<std::size_t>(y)), 1e-12);
        Tape::Var term = tape.scale(tape.neg(tape.log_n(p)), weights[static_cast<std::size_t>(y)]);
        total = (i == 0) ? term : tape.add(total, term);
    }
    return tape.scale(total, 1.0 / static_cast<double>(probs.size()));
}

Tensor predict_probs(Model& model, const DynamicGraphSequence& seq, SubjectTrace* trace) {
    Tape tape;
    Tape::Var probs = model.forward(tape, seq, /*train=*/false, nullptr, trace);
    return tape.val(probs);
}

double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size() || truth.empty())
        throw std::invalid_argument("balanced_accuracy: size mismatch");
    double tp = 0, tn = 0, p = 0, n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 1) {
            p += 1.0;
            if (pred[i] == 1) tp += 1.0;
        } else {
            n += 1.0;
            if (pred[i] == 0) tn += 1.0;
        }
    }
    double sens = (p > 0) ? tp / p : 0.0;
    double spec = (n > 0) ? tn / n : 0.0;
    if (p == 0) return spec;
    if (n == 0) return sens;
    return 0.5 * (sens + spec);
}

namespace {

double eval_balacc(Model& model, const std::vector<const DynamicGraphSequence*>& set) {
    std::vector<int> truth, pred;
    for (const auto* seq : set) {
        Tensor probs = predict_probs(model, *seq);
        truth.push_back(seq->label);
        pred.push_back(probs[1] > probs[0] ? 1 : 0);
    }
    return balanced_accuracy(truth, pred);
}

}  // namespace

TrainedModel train_model(Model& model, const std::vector<const DynamicGraphSequence*>& train_set,
                         const std::vector<const DynamicGraphSequence*>& val_set,
                         const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train_model: empty split");
    if (cfg.min_epochs > cfg.max_epochs)
        throw std::invalid_argument("train_model: min_epochs exceeds max_epochs");
    if (cfg.patience < 1) throw std::invalid_argument("train_model: patience must be >= 1");

    std::vector<int> train_labels;
    for (const auto* s : train_set) train_labels.push_back(s->label);
    auto weights = class_weights(train_labels);

    AdamW opt({cfg.lr, cfg.weight_decay});
    Rng shuffle_rng(mix_seed(cfg.rng_seed, 0xA11CE));
    Rng dropout_rng(mix_seed(cfg.rng_seed, 0xD120));

    TrainedModel result;
    result.best_val_balacc = -1.0;
    std::size_t epochs_since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            std::size_t b1 = std::min(b0 + cfg.batch_size, order.size());
            model.params().zero_grads();
            Tape tape;
            std::vector<const DynamicGraphSequence*> batch;
            std::vector<int> labels;
            for (std::size_t i = b0; i < b1; ++i) {
                batch.push_back(train_set[order[i]]);
                labels.push_back(train_set[order[i]]->label);
            }
            std::vector<Tape::Var> probs =
                model.forward_batch(tape, batch, /*train=*/true, &dropout_rng);
            Tape::Var loss = weighted_ce_loss(tape, probs, labels, weights);
            double lv = tape.val(loss)[0];
            if (!std::isfinite(lv))
                throw std::runtime_error("non-finite training loss at epoch " +
                                         std::to_string(epoch));
            tape.backward(loss);
            opt.step(model.params());
            epoch_loss += lv;
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        double val_balacc = eval_balacc(model, val_set);
        result.curve.push_back({epoch_loss, val_balacc});

        if (val_balacc > result.best_val_balacc) {
            result.best_val_balacc = val_balacc;
            result.best_epoch = epoch;
            result.best_params = model.params().snapshot();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (epoch >= cfg.min_epochs && epochs_since_best >= cfg.patience) break;
    }

    model.params().restore(result.best_params);
    return result;
}

void write_curve_csv(const std::vector<EpochPoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write curve: " + path);
    out << "epoch,train_loss,val_balacc\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1, curve[i].train_loss,
                      curve[i].val_balacc);
        out << buf;
    }
}

}  // namespace dgat
