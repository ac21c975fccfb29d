#include "dgat/model.hpp"

#include <stdexcept>
#include <string>

namespace dgat {

namespace {

std::string gat_name(std::size_t layer, std::size_t head, const char* what) {
    return "gat" + std::to_string(layer) + ".h" + std::to_string(head) + "." + what;
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t rng_seed) : cfg_(std::move(cfg)), store_(rng_seed) {
    if (cfg_.gat_dims.size() != 3) throw std::invalid_argument("expected 3 GAT layer dims");
    if (cfg_.cls_hidden.size() != 2 || cfg_.dropout_rates.size() != 2)
        throw std::invalid_argument("classifier expects 2 hidden layers and 2 dropout rates");
    if (cfg_.bn_scope != "window" && cfg_.bn_scope != "batch")
        throw std::invalid_argument("bn_scope must be 'window' or 'batch'");

    store_.add_normal_scaled("roi_embed", cfg_.n_rois, cfg_.embed_dim);

    std::size_t din = cfg_.embed_dim;
    for (std::size_t l = 0; l < cfg_.gat_dims.size(); ++l) {
        std::size_t dout = cfg_.gat_dims[l];
        if (dout % cfg_.heads != 0)
            throw std::invalid_argument("GAT layer dim not divisible by head count");
        std::size_t dh = dout / cfg_.heads;
        for (std::size_t h = 0; h < cfg_.heads; ++h) {
            store_.add_glorot(gat_name(l, h, "W"), din, dh);
            store_.add_glorot_vec(gat_name(l, h, "a"), 2 * dh);
        }
        din = dout;
    }

    std::size_t d_spatial = cfg_.gat_dims.back();
    store_.add_glorot("pool.W1", d_spatial, cfg_.pool_hidden);
    store_.add_zeros("pool.b1", {cfg_.pool_hidden});
    store_.add_glorot_vec("pool.w2", cfg_.pool_hidden);

    store_.add_glorot_conv("conv.W", cfg_.conv_kernel, d_spatial, cfg_.conv_filters);
    store_.add_zeros("conv.b", {cfg_.conv_filters});
    store_.add_ones("bn.gamma", {cfg_.conv_filters});
    store_.add_zeros("bn.beta", {cfg_.conv_filters});
    store_.add_zeros("bn.run_mean", {cfg_.conv_filters}, /*trainable=*/false);
    store_.add_ones("bn.run_var", {cfg_.conv_filters}, /*trainable=*/false);

    store_.add_glorot("tattn.W1", cfg_.conv_filters, cfg_.attn_hidden);
    store_.add_zeros("tattn.b1", {cfg_.attn_hidden});
    store_.add_glorot_vec("tattn.w2", cfg_.attn_hidden);

    store_.add_glorot("cls.W1", cfg_.cls_hidden[0], cfg_.conv_filters);
    store_.add_zeros("cls.b1", {cfg_.cls_hidden[0]});
    store_.add_glorot("cls.W2", cfg_.cls_hidden[1], cfg_.cls_hidden[0]);
    store_.add_zeros("cls.b2", {cfg_.cls_hidden[1]});
    store_.add_glorot("cls.W3", 2, cfg_.cls_hidden[1]);
    store_.add_zeros("cls.b3", {2});
}

std::pair<Tape::Var, Tape::Var> Model::gat_layer(Tape& tape, Tape::Var h, const Tensor& A,
                                                 std::size_t layer) {
    std::size_t dout = cfg_.gat_dims[layer];
    std::size_t dh = dout / cfg_.heads;
    Tape::Var out = -1;
    Tape::Var alpha_mean = -1;
    for (std::size_t head = 0; head < cfg_.heads; ++head) {
        Parameter& W = store_.get(gat_name(layer, head, "W"));
        Parameter& a = store_.get(gat_name(layer, head, "a"));
        Tape::Var Wv = tape.param(W);
        Tape::Var av = tape.param(a);
        Tape::Var Wh = tape.matmul(h, Wv);
        Tape::Var a_src = tape.slice_vec(av, 0, dh);
        Tape::Var a_dst = tape.slice_vec(av, dh, dh);
        Tape::Var s_src = tape.matvec(Wh, a_src);
        Tape::Var s_dst = tape.matvec(Wh, a_dst);
        Tape::Var e = tape.leaky_relu(tape.outer_sum(s_src, s_dst), cfg_.leaky_slope);
        Tape::Var alpha = tape.softmax_masked_rows(e, A);
        Tape::Var hh = tape.matmul(alpha, Wh);
        out = (head == 0) ? hh : tape.concat(out, hh, 1);
        alpha_mean = (head == 0) ? alpha : tape.add(alpha_mean, alpha);
    }
    if (cfg_.heads > 1) alpha_mean = tape.scale(alpha_mean, 1.0 / static_cast<double>(cfg_.heads));
    return {out, alpha_mean};
}

std::pair<Tape::Var, Tape::Var> Model::attention_pool(Tape& tape, Tape::Var h) {
    Tape::Var hidden = tape.tanh_act(tape.add_rowvec(
        tape.matmul(h, tape.param(store_.get("pool.W1"))), tape.param(store_.get("pool.b1"))));
    Tape::Var scores = tape.matvec(hidden, tape.param(store_.get("pool.w2")));
    Tape::Var weights = tape.softmax_vec(scores);
    Tape::Var z = tape.weighted_sum(weights, h);
    return {z, weights};
}

Tape::Var Model::temporal_conv(Tape& tape, Tape::Var Z, bool train) {
    Tape::Var u = tape.conv1d_same(Z, tape.param(store_.get("conv.W")),
                                   tape.param(store_.get("conv.b")));
    u = tape.batch_norm_1d(u, tape.param(store_.get("bn.gamma")), tape.param(store_.get("bn.beta")),
                           store_.get("bn.run_mean").value, store_.get("bn.run_var").value, train,
                           cfg_.bn_momentum, cfg_.bn_eps);
    return tape.relu(u);
}

std::pair<Tape::Var, Tape::Var> Model::temporal_attend(Tape& tape, Tape::Var u) {
    Tape::Var hidden = tape.tanh_act(tape.add_rowvec(
        tape.matmul(u, tape.param(store_.get("tattn.W1"))), tape.param(store_.get("tattn.b1"))));
    Tape::Var scores = tape.matvec(hidden, tape.param(store_.get("tattn.w2")));
    Tape::Var beta = tape.softmax_vec(scores);
    Tape::Var v = tape.weighted_sum(beta, u);
    return {v, beta};
}

Tape::Var Model::classify(Tape& tape, Tape::Var v, bool train, Rng* dropout_rng) {
    if (train && dropout_rng == nullptr)
        throw std::invalid_argument("training-mode classify needs a dropout rng");
    Tape::Var h1 = tape.relu(tape.add(tape.matvec(tape.param(store_.get("cls.W1")), v),
                                      tape.param(store_.get("cls.b1"))));
    if (train) h1 = tape.dropout(h1, cfg_.dropout_rates[0], true, *dropout_rng);
    Tape::Var h2 = tape.relu(tape.add(tape.matvec(tape.param(store_.get("cls.W2")), h1),
                                      tape.param(store_.get("cls.b2"))));
    if (train) h2 = tape.dropout(h2, cfg_.dropout_rates[1], true, *dropout_rng);
    Tape::Var logits = tape.add(tape.matvec(tape.param(store_.get("cls.W3")), h2),
                                tape.param(store_.get("cls.b3")));
    return tape.softmax_vec(logits);
}

Tape::Var Model::forward(Tape& tape, const DynamicGraphSequence& seq, bool train,
                         Rng* dropout_rng, SubjectTrace* trace) {
    std::vector<SubjectTrace> traces;
    std::vector<Tape::Var> probs =
        forward_batch(tape, {&seq}, train, dropout_rng, trace ? &traces : nullptr);
    if (trace) *trace = std::move(traces[0]);
    return probs[0];
}

std::vector<Tape::Var> Model::forward_batch(Tape& tape,
                                            const std::vector<const DynamicGraphSequence*>& batch,
                                            bool train, Rng* dropout_rng,
                                            std::vector<SubjectTrace>* traces) {
    if (batch.empty()) throw std::invalid_argument("forward_batch on an empty batch");
    if (traces) traces->assign(batch.size(), SubjectTrace{});

    Tape::Var embed = tape.param(store_.get("roi_embed"));
    Tape::Var convW = tape.param(store_.get("conv.W"));
    Tape::Var convB = tape.param(store_.get("conv.b"));

    // spatial path + conv per subject; batch norm scope decided below
    std::vector<Tape::Var> us;
    us.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const DynamicGraphSequence& seq = *batch[s];
        if (seq.windows.empty()) throw std::invalid_argument("forward on an empty graph sequence");
        if (seq.n_rois() != cfg_.n_rois)
            throw std::invalid_argument("sequence ROI count does not match model config");
        SubjectTrace* trace = traces ? &(*traces)[s] : nullptr;
        std::vector<Tape::Var> zs;
        zs.reserve(seq.windows.size());
        for (const auto& wg : seq.windows) {
            WindowAttentionRecord rec;
            Tape::Var h = embed;
            for (std::size_t l = 0; l < cfg_.gat_dims.size(); ++l) {
                auto [hh, alpha] = gat_layer(tape, h, wg.A, l);
                if (trace) rec.alpha.push_back(tape.val(alpha));
                h = (l + 1 < cfg_.gat_dims.size()) ? tape.elu(hh) : hh;
            }
            auto [z, weights] = attention_pool(tape, h);
            if (trace) {
                rec.pool_weights = tape.val(weights);
                trace->windows.push_back(std::move(rec));
            }
            zs.push_back(z);
        }
        us.push_back(tape.conv1d_same(tape.stack_rows(zs), convW, convB));
    }

    Tape::Var gamma = tape.param(store_.get("bn.gamma"));
    Tape::Var beta_p = tape.param(store_.get("bn.beta"));
    Tensor& run_mean = store_.get("bn.run_mean").value;
    Tensor& run_var = store_.get("bn.run_var").value;
    if (train && cfg_.bn_scope == "batch" && batch.size() > 1) {
        // pool the normalization statistics over every window in the batch
        Tape::Var all = us[0];
        for (std::size_t s = 1; s < batch.size(); ++s) all = tape.concat(all, us[s], 0);
        all = tape.batch_norm_1d(all, gamma, beta_p, run_mean, run_var, true, cfg_.bn_momentum,
                                 cfg_.bn_eps);
        std::size_t row = 0;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            std::size_t t = batch[s]->n_windows();
            us[s] = tape.slice_rows(all, row, t);
            row += t;
        }
    } else {
        for (auto& u : us)
            u = tape.batch_norm_1d(u, gamma, beta_p, run_mean, run_var, train, cfg_.bn_momentum,
                                   cfg_.bn_eps);
    }

    std::vector<Tape::Var> probs;
    probs.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        Tape::Var u = tape.relu(us[s]);
        auto [v, beta] = temporal_attend(tape, u);
        if (traces) (*traces)[s].beta = tape.val(beta);
        probs.push_back(classify(tape, v, train, dropout_rng));
    }
    return probs;
}

}  // namespace dgat
