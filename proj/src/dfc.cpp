#include "dgat/dfc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace dgat {

std::vector<std::size_t> window_starts(std::size_t L, const WindowConfig& cfg) {
    if (cfg.w < 2) throw std::invalid_argument("window length must be >= 2");
    if (cfg.s < 1) throw std::invalid_argument("window step must be >= 1");
    if (cfg.w > L)
        throw std::invalid_argument("window length " + std::to_string(cfg.w) +
                                    " exceeds series length " + std::to_string(L));
    std::vector<std::size_t> starts;
    for (std::size_t start = 0; start + cfg.w <= L; start += cfg.s) starts.push_back(start);
    return starts;
}

Tensor pearson_matrix(const Tensor& window) {
    std::size_t w = window.rows(), n = window.cols();
    if (w < 2) throw std::invalid_argument("pearson_matrix needs at least 2 time points");

    std::vector<double> mean(n, 0.0), sd(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double m = 0.0;
        for (std::size_t t = 0; t < w; ++t) m += window.at(t, j);
        mean[j] = m / static_cast<double>(w);
        double v = 0.0;
        for (std::size_t t = 0; t < w; ++t) {
            double d = window.at(t, j) - mean[j];
            v += d * d;
        }
        sd[j] = std::sqrt(v);
        // constant columns leave ~1e-16 rounding residue after mean subtraction;
        // treat them as zero-variance rather than correlating the noise
        double scale = std::max(1.0, std::fabs(mean[j]));
        if (sd[j] <= 1e-12 * scale * std::sqrt(static_cast<double>(w))) sd[j] = 0.0;
    }

    // standardized columns; zero-variance columns stay zero
    Tensor zs({w, n});
    for (std::size_t j = 0; j < n; ++j) {
        if (sd[j] == 0.0) continue;
        for (std::size_t t = 0; t < w; ++t) zs.at(t, j) = (window.at(t, j) - mean[j]) / sd[j];
    }

    Tensor F({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        F.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double r = 0.0;
            for (std::size_t t = 0; t < w; ++t) r += zs.at(t, i) * zs.at(t, j);
            F.at(i, j) = r;
            F.at(j, i) = r;
        }
    }
    return F;
}

Tensor threshold_graph(const Tensor& F, const GraphConfig& cfg) {
    if (cfg.keep_fraction <= 0.0 || cfg.keep_fraction > 1.0)
        throw std::invalid_argument("keep_fraction must be in (0,1]");
    std::size_t n = F.rows();
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            pairs.emplace_back(std::fabs(F.at(i, j)), i, j);
    std::size_t k = static_cast<std::size_t>(
        std::ceil(cfg.keep_fraction * static_cast<double>(pairs.size())));
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    Tensor A({n, n});
    for (std::size_t i = 0; i < n; ++i) A.at(i, i) = 1.0;
    for (std::size_t p = 0; p < k && p < pairs.size(); ++p) {
        auto [v, i, j] = pairs[p];
        A.at(i, j) = 1.0;
        A.at(j, i) = 1.0;
    }
    return A;
}

DynamicGraphSequence extract_sequence(const SubjectRecord& subject, const WindowConfig& wcfg,
                                      const GraphConfig& gcfg) {
    auto starts = window_starts(subject.length(), wcfg);
    DynamicGraphSequence seq;
    seq.subject_id = subject.id;
    seq.label = subject.label;
    std::size_t n = subject.n_rois();
    for (std::size_t start : starts) {
        Tensor win({wcfg.w, n});
        for (std::size_t t = 0; t < wcfg.w; ++t)
            for (std::size_t j = 0; j < n; ++j) win.at(t, j) = subject.series.at(start + t, j);
        Tensor F = pearson_matrix(win);
        Tensor A = threshold_graph(F, gcfg);
        seq.windows.push_back(WindowGraph{std::move(F), std::move(A)});
    }
    return seq;
}

DynamicGraphSequence static_fc(const SubjectRecord& subject, const GraphConfig& gcfg) {
    WindowConfig wcfg{subject.length(), 1};
    return extract_sequence(subject, wcfg, gcfg);
}

void write_sequence_json(const DynamicGraphSequence& seq, const std::string& path) {
    nlohmann::json j;
    j["subject_id"] = seq.subject_id;
    j["T"] = seq.n_windows();
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& wgraph : seq.windows) {
        windows.push_back({{"F", wgraph.F.raw()}, {"A", wgraph.A.raw()}});
    }
    j["windows"] = std::move(windows);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write sequence JSON: " + path);
    out << j.dump();
}

}  // namespace dgat
