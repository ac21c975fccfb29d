#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgat/tensor.hpp"

namespace dgat {

// One subject's ROI time series: L time points x N ROIs, plus a binary label.
struct SubjectRecord {
    std::string id;
    Tensor series;  // [L, N]
    int label = 0;  // 0 = control, 1 = case

    std::size_t length() const { return series.rows(); }
    std::size_t n_rois() const { return series.cols(); }
};

struct Dataset {
    std::vector<SubjectRecord> subjects;
    std::size_t n_rois = 0;
    std::pair<std::size_t, std::size_t> class_counts{0, 0};
};

struct SyntheticSpec {
    std::size_t n_subjects_per_class = 30;
    std::size_t n_rois = 32;
    std::size_t length = 232;
    std::size_t block_size = 8;
    double coupling_delta = 0.6;
    double noise_sd = 1.0;
    std::uint64_t rng_seed = 7;
    // Fraction of the series before the class difference switches on.
    // 0 = difference present throughout; 0.5 = second half only.
    double onset_fraction = 0.0;

    // Base within-block correlation shared by both classes.
    static constexpr double base_rho = 0.2;

    // The ROIs whose coupling differs between classes (the second block).
    std::vector<std::size_t> discriminative_rois() const {
        std::vector<std::size_t> r;
        for (std::size_t i = block_size; i < 2 * block_size && i < n_rois; ++i) r.push_back(i);
        return r;
    }
};

// Reads `<dir>/<id>.csv` for every id in the labels file (lines `id,label`),
// in labels-file order. N is inferred from the first subject.
Dataset load_dataset(const std::string& dir_path, const std::string& labels_path);

// Writes subjects as per-subject CSVs plus labels.csv into dir_path.
void write_dataset(const Dataset& ds, const std::string& dir_path);

// Block-covariance Gaussian sampler with a planted class difference.
// Deterministic for a fixed rng_seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Echo of the spec written next to generated data.
void write_spec_json(const SyntheticSpec& spec, const std::string& path);

}  // namespace dgat
