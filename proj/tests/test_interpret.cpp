#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dgat/interpret.hpp"
#include "dgat/rng.hpp"

using namespace dgat;

namespace {

WindowAttentionRecord make_record(const std::vector<Tensor>& alpha, Tensor pool) {
    WindowAttentionRecord rec;
    rec.alpha = alpha;
    rec.pool_weights = std::move(pool);
    return rec;
}

Tensor row_stochastic(Rng& rng, std::size_t n) {
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) {
            a.at(i, j) = rng.uniform(0.01, 1.0);
            s += a.at(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) a.at(i, j) /= s;
    }
    return a;
}

}  // namespace

TEST_CASE("heatmap: mean of identical records is the symmetrized record") {
    Tensor a({2, 2}, {0.7, 0.3, 0.1, 0.9});
    std::vector<WindowAttentionRecord> recs{make_record({a}, Tensor({2}, {0.5, 0.5})),
                                            make_record({a}, Tensor({2}, {0.5, 0.5}))};
    Tensor H = aggregate_heatmap(recs, 0);
    CHECK(H.at(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(H.at(1, 1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(H.at(0, 1) == doctest::Approx(0.2).epsilon(1e-12));  // (0.3+0.1)/2
    CHECK(H.at(0, 1) == H.at(1, 0));
}

TEST_CASE("heatmap: entrywise mean over records before symmetrization") {
    Tensor a({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor b({2, 2}, {0.0, 1.0, 1.0, 0.0});
    std::vector<WindowAttentionRecord> recs{make_record({a}, Tensor({2}, {1.0, 0.0})),
                                            make_record({b}, Tensor({2}, {0.0, 1.0}))};
    Tensor H = aggregate_heatmap(recs, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(H[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("roi importance: uniform pooling stays uniform") {
    Tensor pool({4}, {0.25, 0.25, 0.25, 0.25});
    std::vector<WindowAttentionRecord> recs{make_record({}, pool), make_record({}, pool)};
    Tensor imp = roi_importance(recs);
    for (std::size_t i = 0; i < 4; ++i) CHECK(imp[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("roi importance: hand-worked mean and renormalization") {
    std::vector<WindowAttentionRecord> recs{
        make_record({}, Tensor({3}, {0.6, 0.3, 0.1})),
        make_record({}, Tensor({3}, {0.2, 0.5, 0.3})),
    };
    Tensor imp = roi_importance(recs);
    // means: {0.4, 0.4, 0.2}, already sum to 1
    CHECK(imp[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(imp[2] == doctest::Approx(0.2).epsilon(1e-12));
    double s = imp[0] + imp[1] + imp[2];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("alpha mass importance: column sums of the last layer, normalized") {
    Tensor a({2, 2}, {0.75, 0.25, 0.5, 0.5});
    std::vector<WindowAttentionRecord> recs{make_record({a}, Tensor({2}, {0.5, 0.5}))};
    Tensor imp = alpha_mass_importance(recs);
    // column sums {1.25, 0.75} over total 2
    CHECK(imp[0] == doctest::Approx(1.25 / 2.0).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(0.75 / 2.0).epsilon(1e-12));
}

TEST_CASE("importance: permuting ROIs permutes the scores") {
    Rng rng(7);
    Tensor a = row_stochastic(rng, 4);
    Tensor pool({4}, {0.1, 0.2, 0.3, 0.4});
    std::vector<WindowAttentionRecord> recs{make_record({a}, pool)};
    Tensor imp = roi_importance(recs);
    // reverse the ROI order
    Tensor ar({4, 4}), poolr({4});
    for (std::size_t i = 0; i < 4; ++i) {
        poolr[i] = pool[3 - i];
        for (std::size_t j = 0; j < 4; ++j) ar.at(i, j) = a.at(3 - i, 3 - j);
    }
    std::vector<WindowAttentionRecord> recsr{make_record({ar}, poolr)};
    Tensor impr = roi_importance(recsr);
    Tensor massr = alpha_mass_importance(recsr);
    Tensor mass = alpha_mass_importance(recs);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(impr[i] == doctest::Approx(imp[3 - i]).epsilon(1e-12));
        CHECK(massr[i] == doctest::Approx(mass[3 - i]).epsilon(1e-12));
    }
}

TEST_CASE("aggregate attention: collects traces into per-subject profiles") {
    Rng rng(13);
    std::vector<SubjectTrace> traces(2);
    for (auto& tr : traces) {
        for (int w = 0; w < 3; ++w) {
            WindowAttentionRecord rec;
            for (int l = 0; l < 2; ++l) rec.alpha.push_back(row_stochastic(rng, 3));
            rec.pool_weights = Tensor({3}, {0.2, 0.3, 0.5});
            tr.windows.push_back(rec);
        }
        tr.beta = Tensor({3}, {0.1, 0.6, 0.3});
    }
    AttentionAggregate agg = aggregate_attention({"s0", "s1"}, traces);
    REQUIRE(agg.heatmap_by_layer.size() == 2);
    REQUIRE(agg.subject_ids.size() == 2);
    REQUIRE(agg.temporal_profiles.size() == 2);
    CHECK(agg.temporal_profiles[0][1] == doctest::Approx(0.6));
    double s = 0;
    for (std::size_t i = 0; i < agg.roi_importance.size(); ++i) s += agg.roi_importance[i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("merge: equal-weight average of fold aggregates") {
    AttentionAggregate a, b;
    a.heatmap_by_layer = {Tensor({2, 2}, {1, 0, 0, 1})};
    b.heatmap_by_layer = {Tensor({2, 2}, {0, 1, 1, 0})};
    a.roi_importance = Tensor({2}, {1.0, 0.0});
    b.roi_importance = Tensor({2}, {0.0, 1.0});
    a.alpha_mass_importance = Tensor({2}, {0.8, 0.2});
    b.alpha_mass_importance = Tensor({2}, {0.2, 0.8});
    a.subject_ids = {"x"};
    b.subject_ids = {"y"};
    a.temporal_profiles = {Tensor({2}, {0.5, 0.5})};
    b.temporal_profiles = {Tensor({2}, {0.9, 0.1})};
    AttentionAggregate g = merge_aggregates({a, b});
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(g.heatmap_by_layer[0][i] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.roi_importance[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.alpha_mass_importance[0] == doctest::Approx(0.5).epsilon(1e-12));
    REQUIRE(g.subject_ids.size() == 2);
    REQUIRE(g.temporal_profiles.size() == 2);
}

TEST_CASE("aggregate json round trip") {
    Rng rng(19);
    AttentionAggregate a;
    a.heatmap_by_layer = {row_stochastic(rng, 3), row_stochastic(rng, 3)};
    a.roi_importance = Tensor({3}, {0.2, 0.3, 0.5});
    a.alpha_mass_importance = Tensor({3}, {0.4, 0.4, 0.2});
    a.subject_ids = {"s0", "s1"};
    a.temporal_profiles = {Tensor({4}, {0.1, 0.2, 0.3, 0.4}), Tensor({4}, {0.25, 0.25, 0.25, 0.25})};
    std::string path = "aggregate_roundtrip_test.json";
    save_aggregate_json(a, path);
    AttentionAggregate b = load_aggregate_json(path);
    REQUIRE(b.heatmap_by_layer.size() == 2);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(b.heatmap_by_layer[l][i] == a.heatmap_by_layer[l][i]);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(b.roi_importance[i] == a.roi_importance[i]);
        CHECK(b.alpha_mass_importance[i] == a.alpha_mass_importance[i]);
    }
    CHECK(b.subject_ids == a.subject_ids);
    REQUIRE(b.temporal_profiles.size() == 2);
    CHECK(b.temporal_profiles[1][2] == a.temporal_profiles[1][2]);
    std::remove(path.c_str());
}

TEST_CASE("csv exporters: well-formed output") {
    Rng rng(29);
    Tensor H = row_stochastic(rng, 3);
    // symmetrize so top_connections sees an undirected map
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            double m = 0.5 * (H.at(i, j) + H.at(j, i));
            H.at(i, j) = m;
            H.at(j, i) = m;
        }
    write_heatmap_csv(H, "hm_test.csv");
    {
        std::ifstream in("hm_test.csv");
        std::string line;
        std::size_t rows = 0;
        while (std::getline(in, line)) {
            ++rows;
            CHECK(std::count(line.begin(), line.end(), ',') == 2);
        }
        CHECK(rows == 3);
    }
    Tensor imp({3}, {0.5, 0.2, 0.3});
    std::vector<std::string> names{"A", "B", "C"};
    write_roi_importance_csv(imp, "imp_test.csv", &names);
    {
        std::ifstream in("imp_test.csv");
        std::string header, first;
        std::getline(in, header);
        std::getline(in, first);
        CHECK(header.find("rank") != std::string::npos);
        CHECK(first.find("A") != std::string::npos);  // highest importance first
    }
    write_top_connections_csv(H, 2, "top_test.csv", &names);
    {
        std::ifstream in("top_test.csv");
        std::string line;
        std::vector<double> weights;
        std::getline(in, line);  // header: rank,roi_i,roi_j,mean_attention,name_i,name_j
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string field;
            for (int f = 0; f < 4; ++f) std::getline(ss, field, ',');
            weights.push_back(std::stod(field));
        }
        REQUIRE(weights.size() == 2);
        CHECK(weights[0] >= weights[1]);  // sorted by strength
    }
    write_temporal_profile_csv({"s0", "s1"},
                               {Tensor({3}, {0.2, 0.3, 0.5}), Tensor({3}, {0.4, 0.4, 0.2})},
                               "tp_test.csv");
    {
        std::ifstream in("tp_test.csv");
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        CHECK(content.find("s0") != std::string::npos);
        CHECK(content.find("mean") != std::string::npos);
    }
    std::remove("hm_test.csv");
    std::remove("imp_test.csv");
    std::remove("top_test.csv");
    std::remove("tp_test.csv");
}
