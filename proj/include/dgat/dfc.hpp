#pragma once

#include <string>
#include <vector>

#include "dgat/data_model.hpp"
#include "dgat/tensor.hpp"

namespace dgat {

struct WindowConfig {
    std::size_t w = 40;
    std::size_t s = 20;
};

struct GraphConfig {
    double keep_fraction = 0.30;
};

// One window: Pearson connectivity F and its thresholded binary adjacency A.
struct WindowGraph {
    Tensor F;  // [N,N], symmetric, unit diagonal
    Tensor A;  // [N,N], binary, symmetric, self loops set
};

struct DynamicGraphSequence {
    std::string subject_id;
    std::vector<WindowGraph> windows;
    int label = 0;

    std::size_t n_windows() const { return windows.size(); }
    std::size_t n_rois() const { return windows.empty() ? 0 : windows[0].F.rows(); }
};

// Window start offsets: [0, s, 2s, ...] with start + w <= L.
std::vector<std::size_t> window_starts(std::size_t L, const WindowConfig& cfg);

// Sample Pearson correlation of the window's columns. Zero-variance columns
// correlate 0 with everything; the diagonal is forced to 1.
Tensor pearson_matrix(const Tensor& window);

// Keeps the k = ceil(keep_fraction * N(N-1)/2) strongest off-diagonal pairs by
// |F_ij|, ties broken toward the lexicographically smaller (i,j). Self loops set.
Tensor threshold_graph(const Tensor& F, const GraphConfig& cfg);

DynamicGraphSequence extract_sequence(const SubjectRecord& subject, const WindowConfig& wcfg,
                                      const GraphConfig& gcfg);

// Ablation variant: one window spanning the entire series.
DynamicGraphSequence static_fc(const SubjectRecord& subject, const GraphConfig& gcfg);

// Per-subject JSON export used by the `extract` CLI command.
void write_sequence_json(const DynamicGraphSequence& seq, const std::string& path);

}  // namespace dgat
