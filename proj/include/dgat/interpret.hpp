#pragma once

#include <string>
#include <vector>

#include "dgat/model.hpp"
#include "dgat/tensor.hpp"

namespace dgat {

// Attention summaries over a scope (one fold's test subjects, or global).
struct AttentionAggregate {
    std::vector<Tensor> heatmap_by_layer;  // per GAT layer, [N,N] symmetrized mean alpha
    Tensor roi_importance;                 // [N], from pooling weights, sums to 1
    Tensor alpha_mass_importance;          // [N], alternative: mean incoming alpha mass
    std::vector<std::string> subject_ids;
    std::vector<Tensor> temporal_profiles;  // per subject, [T]
};

// Entrywise mean of alpha over all (subject, window) records for one layer,
// symmetrized as (H + H^T)/2.
Tensor aggregate_heatmap(const std::vector<WindowAttentionRecord>& records, std::size_t layer);

// Mean pooling weight per ROI, renormalized to sum to 1.
Tensor roi_importance(const std::vector<WindowAttentionRecord>& records);

// Mean incoming attention mass per ROI (column sums of alpha, last layer),
// renormalized to sum to 1. Exported alongside as an alternative view.
Tensor alpha_mass_importance(const std::vector<WindowAttentionRecord>& records);

// Stacks per-subject beta vectors (all sharing T) and appends nothing; the
// columnwise mean is computed by the exporter.
Tensor temporal_profile_matrix(const std::vector<Tensor>& betas);

AttentionAggregate aggregate_attention(const std::vector<std::string>& subject_ids,
                                       const std::vector<SubjectTrace>& traces);

// Averages fold-level aggregates into a global one (equal fold weights).
AttentionAggregate merge_aggregates(const std::vector<AttentionAggregate>& per_fold);

// CSV exporters used by the `explain` CLI command.
void write_heatmap_csv(const Tensor& heatmap, const std::string& path);
void write_roi_importance_csv(const Tensor& importance, const std::string& path,
                              const std::vector<std::string>* roi_names = nullptr);
void write_temporal_profile_csv(const std::vector<std::string>& subject_ids,
                                const std::vector<Tensor>& profiles, const std::string& path);
void write_top_connections_csv(const Tensor& heatmap, std::size_t top_k, const std::string& path,
                               const std::vector<std::string>* roi_names = nullptr);

// JSON round-trip so `evaluate` can persist fold aggregates for `explain`.
void save_aggregate_json(const AttentionAggregate& agg, const std::string& path);
AttentionAggregate load_aggregate_json(const std::string& path);

}  // namespace dgat
