#include "dgat/interpret.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace dgat {

Tensor aggregate_heatmap(const std::vector<WindowAttentionRecord>& records, std::size_t layer) {
    if (records.empty()) throw std::invalid_argument("aggregate_heatmap: empty scope");
    if (layer >= records[0].alpha.size())
        throw std::invalid_argument("aggregate_heatmap: layer out of range");
    std::size_t n = records[0].alpha[layer].rows();
    Tensor H({n, n});
    for (const auto& r : records)
        for (std::size_t i = 0; i < H.size(); ++i) H[i] += r.alpha[layer][i];
    double inv = 1.0 / static_cast<double>(records.size());
    for (std::size_t i = 0; i < H.size(); ++i) H[i] *= inv;
    Tensor S({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) S.at(i, j) = 0.5 * (H.at(i, j) + H.at(j, i));
    return S;
}

Tensor roi_importance(const std::vector<WindowAttentionRecord>& records) {
    if (records.empty()) throw std::invalid_argument("roi_importance: empty scope");
    std::size_t n = records[0].pool_weights.size();
    Tensor imp({n});
    for (const auto& r : records)
        for (std::size_t i = 0; i < n; ++i) imp[i] += r.pool_weights[i];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += imp[i];
    for (std::size_t i = 0; i < n; ++i) imp[i] /= total;
    return imp;
}

Tensor alpha_mass_importance(const std::vector<WindowAttentionRecord>& records) {
    if (records.empty()) throw std::invalid_argument("alpha_mass_importance: empty scope");
    std::size_t layer = records[0].alpha.size() - 1;
    std::size_t n = records[0].alpha[layer].rows();
    Tensor imp({n});
    for (const auto& r : records)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) imp[j] += r.alpha[layer].at(i, j);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += imp[i];
    for (std::size_t i = 0; i < n; ++i) imp[i] /= total;
    return imp;
}

Tensor temporal_profile_matrix(const std::vector<Tensor>& betas) {
    if (betas.empty()) throw std::invalid_argument("temporal_profile: empty scope");
    std::size_t t = betas[0].size();
    for (const auto& b : betas)
        if (b.size() != t)
            throw std::invalid_argument("temporal_profile: inconsistent window count");
    Tensor M({betas.size(), t});
    for (std::size_t i = 0; i < betas.size(); ++i)
        for (std::size_t j = 0; j < t; ++j) M.at(i, j) = betas[i][j];
    return M;
}

AttentionAggregate aggregate_attention(const std::vector<std::string>& subject_ids,
                                       const std::vector<SubjectTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("aggregate_attention: empty scope");
    std::vector<WindowAttentionRecord> records;
    for (const auto& tr : traces)
        for (const auto& w : tr.windows) records.push_back(w);

    AttentionAggregate agg;
    std::size_t n_layers = records[0].alpha.size();
    for (std::size_t l = 0; l < n_layers; ++l)
        agg.heatmap_by_layer.push_back(aggregate_heatmap(records, l));
    agg.roi_importance = roi_importance(records);
    agg.alpha_mass_importance = alpha_mass_importance(records);
    agg.subject_ids = subject_ids;
    for (const auto& tr : traces) agg.temporal_profiles.push_back(tr.beta);
    return agg;
}

AttentionAggregate merge_aggregates(const std::vector<AttentionAggregate>& per_fold) {
    if (per_fold.empty()) throw std::invalid_argument("merge_aggregates: empty scope");
    AttentionAggregate out;
    std::size_t n_layers = per_fold[0].heatmap_by_layer.size();
    double inv = 1.0 / static_cast<double>(per_fold.size());
    for (std::size_t l = 0; l < n_layers; ++l) {
        Tensor H = Tensor::zeros_like(per_fold[0].heatmap_by_layer[l]);
        for (const auto& f : per_fold)
            for (std::size_t i = 0; i < H.size(); ++i) H[i] += f.heatmap_by_layer[l][i];
        for (std::size_t i = 0; i < H.size(); ++i) H[i] *= inv;
        out.heatmap_by_layer.push_back(std::move(H));
    }
    out.roi_importance = Tensor::zeros_like(per_fold[0].roi_importance);
    out.alpha_mass_importance = Tensor::zeros_like(per_fold[0].alpha_mass_importance);
    for (const auto& f : per_fold) {
        for (std::size_t i = 0; i < out.roi_importance.size(); ++i) {
            out.roi_importance[i] += f.roi_importance[i] * inv;
            out.alpha_mass_importance[i] += f.alpha_mass_importance[i] * inv;
        }
        out.subject_ids.insert(out.subject_ids.end(), f.subject_ids.begin(), f.subject_ids.end());
        out.temporal_profiles.insert(out.temporal_profiles.end(), f.temporal_profiles.begin(),
                                     f.temporal_profiles.end());
    }
    // fold means are each normalized, so the equal-weight mean already sums to 1
    return out;
}

void write_heatmap_csv(const Tensor& heatmap, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write heatmap: " + path);
    char buf[32];
    for (std::size_t i = 0; i < heatmap.rows(); ++i) {
        for (std::size_t j = 0; j < heatmap.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", heatmap.at(i, j));
            out << buf;
            if (j + 1 < heatmap.cols()) out << ',';
        }
        out << '\n';
    }
}

void write_roi_importance_csv(const Tensor& importance, const std::string& path,
                              const std::vector<std::string>* roi_names) {
    std::vector<std::size_t> order(importance.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    std::vector<std::size_t> rank(importance.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write roi importance: " + path);
    out << "roi_index,score,rank";
    if (roi_names) out << ",name";
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < importance.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", importance[i]);
        out << i << ',' << buf << ',' << rank[i];
        if (roi_names) out << ',' << (i < roi_names->size() ? (*roi_names)[i] : "");
        out << '\n';
    }
}

void write_temporal_profile_csv(const std::vector<std::string>& subject_ids,
                                const std::vector<Tensor>& profiles, const std::string& path) {
    Tensor M = temporal_profile_matrix(profiles);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write temporal profile: " + path);
    out << "subject";
    for (std::size_t j = 0; j < M.cols(); ++j) out << ",beta_" << (j + 1);
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < M.rows(); ++i) {
        out << (i < subject_ids.size() ? subject_ids[i] : std::to_string(i));
        for (std::size_t j = 0; j < M.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", M.at(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
    out << "mean";
    for (std::size_t j = 0; j < M.cols(); ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < M.rows(); ++i) m += M.at(i, j);
        std::snprintf(buf, sizeof(buf), "%.17g", m / static_cast<double>(M.rows()));
        out << ',' << buf;
    }
    out << '\n';
}

void write_top_connections_csv(const Tensor& heatmap, std::size_t top_k, const std::string& path,
                               const std::vector<std::string>* roi_names) {
    std::size_t n = heatmap.rows();
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(heatmap.at(i, j), i, j);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write top connections: " + path);
    out << "rank,roi_i,roi_j,mean_attention";
    if (roi_names) out << ",name_i,name_j";
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < top_k && r < pairs.size(); ++r) {
        auto [v, i, j] = pairs[r];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << (r + 1) << ',' << i << ',' << j << ',' << buf;
        if (roi_names)
            out << ',' << (i < roi_names->size() ? (*roi_names)[i] : "") << ','
                << (j < roi_names->size() ? (*roi_names)[j] : "");
        out << '\n';
    }
}

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"values", t.raw()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j["shape"].get<std::vector<std::size_t>>(),
                  j["values"].get<std::vector<double>>());
}

}  // namespace

void save_aggregate_json(const AttentionAggregate& agg, const std::string& path) {
    nlohmann::json j;
    for (const auto& h : agg.heatmap_by_layer) j["heatmap_by_layer"].push_back(tensor_to_json(h));
    j["roi_importance"] = tensor_to_json(agg.roi_importance);
    j["alpha_mass_importance"] = tensor_to_json(agg.alpha_mass_importance);
    j["subject_ids"] = agg.subject_ids;
    for (const auto& p : agg.temporal_profiles) j["temporal_profiles"].push_back(tensor_to_json(p));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write aggregate: " + path);
    out << j.dump();
}

AttentionAggregate load_aggregate_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read aggregate: " + path);
    nlohmann::json j;
    in >> j;
    AttentionAggregate agg;
    for (const auto& h : j["heatmap_by_layer"]) agg.heatmap_by_layer.push_back(tensor_from_json(h));
    agg.roi_importance = tensor_from_json(j["roi_importance"]);
    agg.alpha_mass_importance = tensor_from_json(j["alpha_mass_importance"]);
    agg.subject_ids = j["subject_ids"].get<std::vector<std::string>>();
    for (const auto& p : j["temporal_profiles"]) agg.temporal_profiles.push_back(tensor_from_json(p));
    return agg;
}

}  // namespace dgat
