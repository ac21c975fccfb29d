#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dgat/data_model.hpp"
#include "dgat/dfc.hpp"
#include "dgat/rng.hpp"

using namespace dgat;

namespace {

// Independent textbook Pearson: double loop over raw sums.
double pearson_oracle(const Tensor& X, std::size_t a, std::size_t b) {
    std::size_t n = X.rows();
    double ma = 0, mb = 0;
    for (std::size_t t = 0; t < n; ++t) {
        ma += X.at(t, a);
        mb += X.at(t, b);
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t t = 0; t < n; ++t) {
        num += (X.at(t, a) - ma) * (X.at(t, b) - mb);
        da += (X.at(t, a) - ma) * (X.at(t, a) - ma);
        db += (X.at(t, b) - mb) * (X.at(t, b) - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

Tensor rand_series(Rng& rng, std::size_t L, std::size_t N) {
    Tensor X({L, N});
    for (std::size_t i = 0; i < X.size(); ++i) X[i] = rng.normal();
    return X;
}

std::size_t off_diag_edges(const Tensor& A) {
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j)
            if (i != j && A.at(i, j) != 0.0) ++cnt;
    return cnt;
}

}  // namespace

TEST_CASE("window starts: default protocol yields 10 windows for L=232") {
    auto starts = window_starts(232, WindowConfig{40, 20});
    REQUIRE(starts.size() == 10);
    for (std::size_t i = 0; i < starts.size(); ++i) CHECK(starts[i] == 20 * i);
    CHECK(starts.back() + 40 <= 232);
}

TEST_CASE("window starts: degenerate and exact-fit cases") {
    CHECK(window_starts(40, WindowConfig{40, 20}).size() == 1);
    CHECK(window_starts(60, WindowConfig{40, 20}).size() == 2);
    CHECK_THROWS(window_starts(39, WindowConfig{40, 20}));  // window longer than series
}

TEST_CASE("pearson: perfectly correlated and anti-correlated columns") {
    Tensor X({4, 3});
    for (std::size_t t = 0; t < 4; ++t) {
        X.at(t, 0) = static_cast<double>(t);
        X.at(t, 1) = 2.0 * t + 5.0;   // affine in col 0 -> r = 1
        X.at(t, 2) = -3.0 * t + 1.0;  // negative slope -> r = -1
    }
    Tensor F = pearson_matrix(X);
    CHECK(F.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(F.at(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < 3; ++i) CHECK(F.at(i, i) == 1.0);
}

TEST_CASE("pearson: matches the double-loop oracle on random data") {
    Rng rng(101);
    Tensor X = rand_series(rng, 25, 6);
    Tensor F = pearson_matrix(X);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            double expect = (i == j) ? 1.0 : pearson_oracle(X, i, j);
            CHECK(std::fabs(F.at(i, j) - expect) <= 1e-10);
            CHECK(F.at(i, j) == F.at(j, i));
        }
}

TEST_CASE("pearson: invariant under affine rescaling of a column") {
    Rng rng(55);
    Tensor X = rand_series(rng, 30, 4);
    Tensor F1 = pearson_matrix(X);
    for (std::size_t t = 0; t < 30; ++t) X.at(t, 2) = 7.5 * X.at(t, 2) - 100.0;
    Tensor F2 = pearson_matrix(X);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::fabs(F1.at(i, j) - F2.at(i, j)) <= 1e-10);
}

TEST_CASE("pearson: zero-variance column correlates 0, keeps unit diagonal") {
    Rng rng(9);
    Tensor X = rand_series(rng, 20, 3);
    for (std::size_t t = 0; t < 20; ++t) X.at(t, 1) = 4.2;
    Tensor F = pearson_matrix(X);
    CHECK(F.at(0, 1) == 0.0);
    CHECK(F.at(1, 2) == 0.0);
    CHECK(F.at(1, 1) == 1.0);
}

TEST_CASE("threshold: keeps exactly ceil(0.3 * pairs) strongest pairs") {
    Rng rng(77);
    std::size_t N = 10;  // 45 pairs -> k = ceil(13.5) = 14
    Tensor X = rand_series(rng, 50, N);
    Tensor F = pearson_matrix(X);
    Tensor A = threshold_graph(F, GraphConfig{0.30});
    CHECK(off_diag_edges(A) == 2 * 14);
    for (std::size_t i = 0; i < N; ++i) CHECK(A.at(i, i) == 1.0);
    // every kept pair must be at least as strong as every dropped pair
    double weakest_kept = 2.0, strongest_dropped = -1.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j) {
            double m = std::fabs(F.at(i, j));
            if (A.at(i, j) != 0.0)
                weakest_kept = std::min(weakest_kept, m);
            else
                strongest_dropped = std::max(strongest_dropped, m);
        }
    CHECK(weakest_kept >= strongest_dropped);
    // symmetry
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) CHECK(A.at(i, j) == A.at(j, i));
}

TEST_CASE("threshold: lexicographic tie break is deterministic") {
    // all off-diagonal magnitudes equal: the k smallest (i,j) pairs win
    std::size_t N = 4;  // 6 pairs, keep ceil(1.8) = 2 -> (0,1) and (0,2)
    Tensor F({N, N});
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) F.at(i, j) = (i == j) ? 1.0 : 0.5;
    Tensor A = threshold_graph(F, GraphConfig{0.30});
    CHECK(A.at(0, 1) == 1.0);
    CHECK(A.at(0, 2) == 1.0);
    CHECK(A.at(0, 3) == 0.0);
    CHECK(A.at(1, 2) == 0.0);
    CHECK(off_diag_edges(A) == 4);
}

TEST_CASE("threshold: keep_fraction 1 gives the complete graph") {
    Rng rng(4);
    Tensor F = pearson_matrix(rand_series(rng, 30, 5));
    Tensor A = threshold_graph(F, GraphConfig{1.0});
    CHECK(off_diag_edges(A) == 5 * 4);
}

TEST_CASE("extract: default protocol shapes and per-window edge budget") {
    Rng rng(2024);
    SubjectRecord s{"sub0", rand_series(rng, 232, 116), 1};
    auto seq = extract_sequence(s, WindowConfig{40, 20}, GraphConfig{0.30});
    REQUIRE(seq.n_windows() == 10);
    CHECK(seq.n_rois() == 116);
    CHECK(seq.label == 1);
    std::size_t pairs = 116 * 115 / 2;  // 6670
    std::size_t k = static_cast<std::size_t>(std::ceil(0.30 * pairs));
    for (const auto& w : seq.windows) {
        CHECK(off_diag_edges(w.A) == 2 * k);
        // window connectivity matches a directly computed slice
        CHECK(w.F.rows() == 116);
    }
    // first window F equals pearson over rows [0,40)
    Tensor W({40, 116});
    for (std::size_t t = 0; t < 40; ++t)
        for (std::size_t j = 0; j < 116; ++j) W.at(t, j) = s.series.at(t, j);
    Tensor F0 = pearson_matrix(W);
    for (std::size_t i = 0; i < 116; ++i)
        for (std::size_t j = 0; j < 116; ++j)
            CHECK(std::fabs(seq.windows[0].F.at(i, j) - F0.at(i, j)) <= 1e-12);
}

TEST_CASE("static fc: a single window spanning the whole series") {
    Rng rng(31);
    SubjectRecord s{"sub0", rand_series(rng, 100, 12), 0};
    auto seq = static_fc(s, GraphConfig{0.30});
    REQUIRE(seq.n_windows() == 1);
    Tensor F = pearson_matrix(s.series);
    for (std::size_t i = 0; i < F.size(); ++i)
        CHECK(std::fabs(seq.windows[0].F[i] - F[i]) <= 1e-12);
}

TEST_CASE("extract: permuting ROI order permutes the graphs consistently") {
    Rng rng(66);
    std::size_t N = 8, L = 80;
    SubjectRecord s{"a", rand_series(rng, L, N), 0};
    // reverse ROI order
    SubjectRecord sp{"a", Tensor({L, N}), 0};
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t j = 0; j < N; ++j) sp.series.at(t, j) = s.series.at(t, N - 1 - j);
    auto q = extract_sequence(s, WindowConfig{40, 20}, GraphConfig{0.30});
    auto qp = extract_sequence(sp, WindowConfig{40, 20}, GraphConfig{0.30});
    for (std::size_t w = 0; w < q.n_windows(); ++w)
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                CHECK(std::fabs(q.windows[w].F.at(i, j) -
                                qp.windows[w].F.at(N - 1 - i, N - 1 - j)) <= 1e-12);
}

TEST_CASE("dataset: csv round trip preserves values and labels") {
    Rng rng(123);
    Dataset ds;
    ds.n_rois = 5;
    for (int i = 0; i < 4; ++i) {
        SubjectRecord s;
        s.id = "subj" + std::to_string(i);
        s.series = rand_series(rng, 30, 5);
        s.label = i % 2;
        ds.subjects.push_back(std::move(s));
    }
    ds.class_counts = {2, 2};
    std::string dir = "roundtrip_ds_test";
    write_dataset(ds, dir);
    Dataset back = load_dataset(dir, dir + "/labels.csv");
    REQUIRE(back.subjects.size() == 4);
    CHECK(back.n_rois == 5);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back.subjects[i].id == ds.subjects[i].id);
        CHECK(back.subjects[i].label == ds.subjects[i].label);
        for (std::size_t v = 0; v < ds.subjects[i].series.size(); ++v)
            CHECK(back.subjects[i].series[v] == ds.subjects[i].series[v]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("dataset: loader rejects malformed inputs") {
    std::string dir = "bad_ds_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream labels(dir + "/labels.csv");
        labels << "s1,1\n";
        std::ofstream f(dir + "/s1.csv");
        f << "1.0,2.0\n3.0\n";  // ragged rows
    }
    CHECK_THROWS(load_dataset(dir, dir + "/labels.csv"));
    {
        std::ofstream f(dir + "/s1.csv");
        f << "1.0,nan\n3.0,4.0\n";  // non-finite
    }
    CHECK_THROWS(load_dataset(dir, dir + "/labels.csv"));
    {
        std::ofstream f(dir + "/s1.csv");
        f << "1.0,2.0\n3.0,4.0\n";
        std::ofstream labels(dir + "/labels.csv");
        labels << "s1,2\n";  // bad label
    }
    CHECK_THROWS(load_dataset(dir, dir + "/labels.csv"));
    {
        std::ofstream labels(dir + "/labels.csv");
        labels << "missing_subject,0\n";  // no csv on disk
    }
    CHECK_THROWS(load_dataset(dir, dir + "/labels.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic: deterministic for a fixed seed") {
    SyntheticSpec spec;
    spec.n_subjects_per_class = 3;
    spec.n_rois = 12;
    spec.length = 60;
    spec.block_size = 4;
    Dataset a = generate_synthetic(spec);
    Dataset b = generate_synthetic(spec);
    REQUIRE(a.subjects.size() == b.subjects.size());
    for (std::size_t i = 0; i < a.subjects.size(); ++i)
        for (std::size_t v = 0; v < a.subjects[i].series.size(); ++v)
            CHECK(a.subjects[i].series[v] == b.subjects[i].series[v]);
    CHECK(a.class_counts.first == 3);
    CHECK(a.class_counts.second == 3);
}

TEST_CASE("synthetic: planted coupling raises within-block correlation for cases") {
    SyntheticSpec spec;
    spec.n_subjects_per_class = 20;
    spec.n_rois = 16;
    spec.length = 200;
    spec.block_size = 4;
    spec.coupling_delta = 0.5;
    Dataset ds = generate_synthetic(spec);
    auto rois = spec.discriminative_rois();  // {4,5,6,7}
    double mean_r[2] = {0, 0};
    int count[2] = {0, 0};
    for (const auto& s : ds.subjects) {
        Tensor F = pearson_matrix(s.series);
        for (std::size_t a = 0; a < rois.size(); ++a)
            for (std::size_t b = a + 1; b < rois.size(); ++b) {
                mean_r[s.label] += F.at(rois[a], rois[b]);
                ++count[s.label];
            }
    }
    mean_r[0] /= count[0];
    mean_r[1] /= count[1];
    CHECK(mean_r[1] - mean_r[0] > 0.2);
}

TEST_CASE("synthetic: zero coupling delta removes the class difference") {
    SyntheticSpec spec;
    spec.n_subjects_per_class = 15;
    spec.n_rois = 12;
    spec.length = 150;
    spec.block_size = 4;
    spec.coupling_delta = 0.0;
    Dataset ds = generate_synthetic(spec);
    auto rois = spec.discriminative_rois();
    double mean_r[2] = {0, 0};
    int count[2] = {0, 0};
    for (const auto& s : ds.subjects) {
        Tensor F = pearson_matrix(s.series);
        for (std::size_t a = 0; a < rois.size(); ++a)
            for (std::size_t b = a + 1; b < rois.size(); ++b) {
                mean_r[s.label] += F.at(rois[a], rois[b]);
                ++count[s.label];
            }
    }
    CHECK(std::fabs(mean_r[1] / count[1] - mean_r[0] / count[0]) < 0.15);
}

TEST_CASE("synthetic: onset fraction delays the planted difference") {
    SyntheticSpec spec;
    spec.n_subjects_per_class = 20;
    spec.n_rois = 12;
    spec.length = 200;
    spec.block_size = 4;
    spec.coupling_delta = 0.6;
    spec.onset_fraction = 0.5;
    Dataset ds = generate_synthetic(spec);
    auto rois = spec.discriminative_rois();
    // correlations in the first half should not separate the classes,
    // in the second half they should
    auto block_mean = [&](const Tensor& X, std::size_t t0, std::size_t t1) {
        Tensor W({t1 - t0, X.cols()});
        for (std::size_t t = t0; t < t1; ++t)
            for (std::size_t j = 0; j < X.cols(); ++j) W.at(t - t0, j) = X.at(t, j);
        Tensor F = pearson_matrix(W);
        double m = 0;
        int c = 0;
        for (std::size_t a = 0; a < rois.size(); ++a)
            for (std::size_t b = a + 1; b < rois.size(); ++b) {
                m += F.at(rois[a], rois[b]);
                ++c;
            }
        return m / c;
    };
    double first[2] = {0, 0}, second[2] = {0, 0};
    int n[2] = {0, 0};
    for (const auto& s : ds.subjects) {
        first[s.label] += block_mean(s.series, 0, 100);
        second[s.label] += block_mean(s.series, 100, 200);
        ++n[s.label];
    }
    double gap_first = first[1] / n[1] - first[0] / n[0];
    double gap_second = second[1] / n[1] - second[0] / n[0];
    CHECK(std::fabs(gap_first) < 0.15);
    CHECK(gap_second > 0.25);
}
