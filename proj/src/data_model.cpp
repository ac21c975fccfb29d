#include "dgat/data_model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dgat/rng.hpp"

namespace dgat {

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<double>> read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open time-series file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error("bad numeric value in " + path + ": '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_csv_matrix(const Tensor& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            out << buf;
            if (j + 1 < m.cols()) out << ',';
        }
        out << '\n';
    }
}

}  // namespace

Dataset load_dataset(const std::string& dir_path, const std::string& labels_path) {
    std::ifstream lab(labels_path);
    if (!lab) throw std::runtime_error("cannot open labels file: " + labels_path);
    Dataset ds;
    std::string line;
    while (std::getline(lab, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("labels file line is not 'id,label': " + line);
        std::string id = line.substr(0, comma);
        std::string lstr = line.substr(comma + 1);
        if (id == "id" && ds.subjects.empty()) continue;  // optional header
        int label;
        try {
            label = std::stoi(lstr);
        } catch (const std::exception&) {
            throw std::runtime_error("bad label for subject " + id + ": '" + lstr + "'");
        }
        if (label != 0 && label != 1)
            throw std::runtime_error("label not in {0,1} for subject " + id);

        fs::path file = fs::path(dir_path) / (id + ".csv");
        if (!fs::exists(file))
            throw std::runtime_error("unknown subject id (no time-series file): " + id);
        auto rows = read_csv_matrix(file.string());
        if (rows.empty()) throw std::runtime_error("empty time-series file for subject " + id);
        std::size_t n = rows[0].size();
        for (const auto& r : rows)
            if (r.size() != n)
                throw std::runtime_error("ragged rows in time-series file for subject " + id);
        if (ds.subjects.empty()) {
            ds.n_rois = n;
        } else if (n != ds.n_rois) {
            throw std::runtime_error("dimension mismatch: subject " + id + " has " +
                                     std::to_string(n) + " ROIs, expected " +
                                     std::to_string(ds.n_rois));
        }
        Tensor series({rows.size(), n});
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (!std::isfinite(rows[i][j]))
                    throw std::runtime_error("non-finite value in time series of subject " + id);
                series.at(i, j) = rows[i][j];
            }
        SubjectRecord rec{id, std::move(series), label};
        if (label == 0)
            ++ds.class_counts.first;
        else
            ++ds.class_counts.second;
        ds.subjects.push_back(std::move(rec));
    }
    if (ds.subjects.empty()) throw std::runtime_error("labels file lists no subjects");
    if (ds.n_rois < 2) throw std::runtime_error("dataset needs at least 2 ROIs");
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir_path) {
    fs::create_directories(dir_path);
    std::ofstream lab(fs::path(dir_path) / "labels.csv");
    if (!lab) throw std::runtime_error("cannot write labels.csv under " + dir_path);
    for (const auto& s : ds.subjects) {
        write_csv_matrix(s.series, (fs::path(dir_path) / (s.id + ".csv")).string());
        lab << s.id << ',' << s.label << '\n';
    }
}

namespace {

Eigen::MatrixXd block_covariance(const SyntheticSpec& spec, double rho_block2) {
    std::size_t n = spec.n_rois, bs = spec.block_size;
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
    auto fill_block = [&](std::size_t start, double rho) {
        for (std::size_t i = start; i < start + bs && i < n; ++i)
            for (std::size_t j = start; j < start + bs && j < n; ++j)
                if (i != j) corr(i, j) = rho;
    };
    fill_block(0, SyntheticSpec::base_rho);
    if (2 * spec.block_size <= n) fill_block(bs, rho_block2);
    return spec.noise_sd * spec.noise_sd * corr;
}

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("synthetic spec implies a non-positive-definite covariance");
    return llt.matrixL();
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.block_size > spec.n_rois)
        throw std::invalid_argument("block_size exceeds n_rois");
    if (spec.noise_sd <= 0.0) throw std::invalid_argument("noise_sd must be positive");
    if (spec.coupling_delta < 0.0 || spec.coupling_delta > 1.0)
        throw std::invalid_argument("coupling_delta must lie in [0,1]");

    double rho_hi = SyntheticSpec::base_rho + spec.coupling_delta;
    Eigen::MatrixXd chol_base = cholesky_or_throw(block_covariance(spec, SyntheticSpec::base_rho));
    Eigen::MatrixXd chol_case = cholesky_or_throw(block_covariance(spec, rho_hi));

    std::size_t onset = static_cast<std::size_t>(spec.onset_fraction * static_cast<double>(spec.length));

    Rng rng(spec.rng_seed);
    Dataset ds;
    ds.n_rois = spec.n_rois;
    Eigen::VectorXd z(spec.n_rois);
    char idbuf[32];
    for (int label = 0; label <= 1; ++label) {
        for (std::size_t s = 0; s < spec.n_subjects_per_class; ++s) {
            std::snprintf(idbuf, sizeof(idbuf), "%s%03zu", label == 0 ? "ctl" : "case", s);
            Tensor series({spec.length, spec.n_rois});
            for (std::size_t t = 0; t < spec.length; ++t) {
                for (std::size_t i = 0; i < spec.n_rois; ++i) z(i) = rng.normal();
                const Eigen::MatrixXd& L = (label == 1 && t >= onset) ? chol_case : chol_base;
                Eigen::VectorXd x = L * z;
                for (std::size_t i = 0; i < spec.n_rois; ++i) series.at(t, i) = x(i);
            }
            ds.subjects.push_back(SubjectRecord{idbuf, std::move(series), label});
        }
    }
    ds.class_counts = {spec.n_subjects_per_class, spec.n_subjects_per_class};
    return ds;
}

void write_spec_json(const SyntheticSpec& spec, const std::string& path) {
    nlohmann::json j{{"n_subjects_per_class", spec.n_subjects_per_class},
                     {"n_rois", spec.n_rois},
                     {"length", spec.length},
                     {"block_size", spec.block_size},
                     {"coupling_delta", spec.coupling_delta},
                     {"noise_sd", spec.noise_sd},
                     {"rng_seed", spec.rng_seed},
                     {"onset_fraction", spec.onset_fraction},
                     {"base_rho", SyntheticSpec::base_rho}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write spec echo: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace dgat
