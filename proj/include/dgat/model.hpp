#pragma once

#include <cstdint>
#include <vector>

#include "dgat/autodiff.hpp"
#include "dgat/dfc.hpp"
#include "dgat/params.hpp"

namespace dgat {

struct ModelConfig {
    std::size_t n_rois = 116;
    std::size_t embed_dim = 64;
    std::vector<std::size_t> gat_dims{128, 128, 64};
    std::size_t heads = 1;
    double leaky_slope = 0.2;
    std::size_t pool_hidden = 32;
    std::size_t conv_filters = 96;
    std::size_t conv_kernel = 3;
    std::size_t attn_hidden = 48;
    std::vector<std::size_t> cls_hidden{64, 32};
    std::vector<double> dropout_rates{0.5, 0.4};
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    // Training-time normalization scope of the post-conv batch norm:
    // "window" = statistics over one subject's windows, "batch" = over all
    // windows of the mini-batch. Eval mode always uses running stats.
    std::string bn_scope = "window";
};

// Attention captured during one window's forward pass.
struct WindowAttentionRecord {
    std::vector<Tensor> alpha;  // one [N,N] per GAT layer (head-averaged)
    Tensor pool_weights;        // [N]
};

struct SubjectTrace {
    std::vector<WindowAttentionRecord> windows;
    Tensor beta;  // [T]
};

// Full D-GATNet replica: ROI embeddings -> 3 GAT layers -> attention pooling
// per window -> Conv1D + BN + ReLU -> temporal attention -> dense classifier.
class Model {
public:
    Model(ModelConfig cfg, std::uint64_t rng_seed);

    // Returns the probability vector var ([2], sums to 1). When trace is
    // non-null it receives copies of all attention weights.
    Tape::Var forward(Tape& tape, const DynamicGraphSequence& seq, bool train,
                      Rng* dropout_rng, SubjectTrace* trace = nullptr);

    // Mini-batch forward. With bn_scope == "batch" the post-conv batch norm
    // pools its training statistics over every window of every subject here;
    // otherwise each subject normalizes over its own windows.
    std::vector<Tape::Var> forward_batch(Tape& tape,
                                         const std::vector<const DynamicGraphSequence*>& batch,
                                         bool train, Rng* dropout_rng,
                                         std::vector<SubjectTrace>* traces = nullptr);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

    // Exposed for layer-level tests: one GAT layer over existing node features.
    std::pair<Tape::Var, Tape::Var> gat_layer(Tape& tape, Tape::Var h, const Tensor& A,
                                              std::size_t layer);
    std::pair<Tape::Var, Tape::Var> attention_pool(Tape& tape, Tape::Var h);
    Tape::Var temporal_conv(Tape& tape, Tape::Var Z, bool train);
    std::pair<Tape::Var, Tape::Var> temporal_attend(Tape& tape, Tape::Var u);
    Tape::Var classify(Tape& tape, Tape::Var v, bool train, Rng* dropout_rng);

private:
    ModelConfig cfg_;
    ParamStore store_;
};

}  // namespace dgat
