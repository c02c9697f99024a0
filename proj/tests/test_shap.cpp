#include "aptids/error.hpp"
#include "aptids/shap.hpp"
#include "aptids/text_util.hpp"
#include "fixtures.hpp"
#include "shap_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace aptids;
using gbt::Tree;
using gbt::TreeEnsemble;
using gbt::TreeNode;

namespace {

Tree stump(int feature, double threshold, double lo, double hi, double cover_lo = 1.0, double cover_hi = 1.0) {
    Tree t;
    t.nodes = {TreeNode::make_split(feature, threshold, 1, 2, cover_lo + cover_hi), TreeNode::make_leaf(lo, cover_lo),
               TreeNode::make_leaf(hi, cover_hi)};
    return t;
}

TreeEnsemble ensemble_of(std::vector<Tree> trees, std::size_t n_features, std::size_t n_classes) {
    TreeEnsemble e;
    e.trees = std::move(trees);
    e.n_classes = n_classes;
    e.feature_names = fixtures::numbered("f", n_features);
    e.class_names = fixtures::numbered("c", n_classes);
    return e;
}

TreeEnsemble trained(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t k, int rounds, int depth) {
    gbt::Hyperparams hp;
    hp.n_estimators = rounds;
    hp.max_depth = depth;
    return gbt::train(fixtures::blobs(n, m, k, seed, 1.5), hp);
}

}  // namespace

TEST_CASE("conditional expectation") {
    // depth-2 tree: f0 < 0 ? (f1 < 0 ? 1 : 2) : 5, covers 1,3,4
    Tree t;
    t.nodes = {TreeNode::make_split(0, 0.0, 1, 4, 8), TreeNode::make_split(1, 0.0, 2, 3, 4),
               TreeNode::make_leaf(1, 1), TreeNode::make_leaf(2, 3), TreeNode::make_leaf(5, 4)};
    const std::vector<double> x = {-1.0, 1.0};
    CHECK(shap::conditional_expectation(t, x, {true, true}) == 2.0);
    CHECK(shap::conditional_expectation(t, x, {true, true}) == t.predict(x));
    // Leaf enumeration: (1*1 + 2*3 + 5*4) / 8
    CHECK(shap::conditional_expectation(t, x, {false, false}) == doctest::Approx(27.0 / 8.0));
    CHECK(shap::expected_value(t) == doctest::Approx(27.0 / 8.0));
    CHECK(shap::conditional_expectation(t, x, {true, false}) == doctest::Approx(7.0 / 4.0));
    CHECK(shap::conditional_expectation(t, x, {false, true}) == doctest::Approx((2.0 * 4 + 5.0 * 4) / 8.0));

    const auto s = stump(0, 0.5, 1.0, 3.0, 2.5, 2.5);
    CHECK(shap::conditional_expectation(s, x, {false, false}) == 2.0);

    Tree zero = s;
    zero.nodes[0].cover = 0;
    CHECK_THROWS_AS(shap::conditional_expectation(zero, x, {false, false}), Error);
}

TEST_CASE("brute-force Shapley on hand-built trees") {
    SUBCASE("constant tree") {
        const auto e = ensemble_of({Tree{{TreeNode::make_leaf(0.7, 3.0)}}, Tree{{TreeNode::make_leaf(0.0, 3.0)}}}, 3, 2);
        const std::vector<double> x = {1, 2, 3};
        const auto sv = shap::brute_force_shapley(e, x, 0);
        CHECK(sv.phi == std::vector<double>{0, 0, 0});
        CHECK(sv.base_value == doctest::Approx(0.7 + 0.5));
    }
    SUBCASE("single stump routed left") {
        const auto e = ensemble_of({stump(0, 0.5, 1.0, 3.0), Tree{{TreeNode::make_leaf(0.0, 2.0)}}}, 3, 2);
        const std::vector<double> x = {0.0, 9.0, 9.0};
        const auto sv = shap::brute_force_shapley(e, x, 0);
        CHECK(sv.base_value == doctest::Approx(2.5));
        CHECK(sv.phi[0] == doctest::Approx(-1.0));
        CHECK(sv.phi[1] == 0.0);
        CHECK(sv.phi[2] == 0.0);
    }
    SUBCASE("refuses wide inputs") {
        const auto e = ensemble_of({}, 21, 2);
        const std::vector<double> x(21, 0.0);
        CHECK_THROWS_AS(shap::brute_force_shapley(e, x, 0), Error);
    }
}

TEST_CASE("empty ensemble") {
    const auto t = fixtures::blobs(10, 3, 2, 1);
    const auto m = shap::tree_shap(ensemble_of({}, 3, 2), t);
    CHECK(m.base_values == std::vector<double>{0.5, 0.5});
    for (double v : m.values) CHECK(v == 0.0);
}

TEST_CASE("tree_shap matches both brute-force references") {
    struct Case { std::uint64_t seed; std::size_t m, k; int rounds, depth; };
    for (const auto& c : {Case{1, 4, 2, 3, 3}, Case{2, 6, 3, 4, 4}, Case{3, 8, 2, 2, 6}, Case{4, 5, 4, 3, 2}}) {
        const auto e = trained(c.seed, 120, c.m, c.k, c.rounds, c.depth);
        const auto t = fixtures::blobs(20, c.m, c.k, c.seed + 100, 2.0);
        const auto mat = shap::tree_shap(e, t);
        for (std::size_t s = 0; s < t.rows(); ++s) {
            for (std::size_t k = 0; k < c.k; ++k) {
                const auto ref = oracle::shapley(e, static_cast<int>(k), t.row(s));
                const auto lib = shap::brute_force_shapley(e, t.row(s), static_cast<int>(k));
                for (std::size_t i = 0; i < c.m; ++i) {
                    CHECK(std::abs(mat.at(s, k, i) - ref[i]) <= 1e-8);
                    CHECK(std::abs(lib.phi[i] - ref[i]) <= 1e-8);
                }
                CHECK(std::abs(mat.base_values[k] - lib.base_value) <= 1e-9);
            }
        }
    }
}

TEST_CASE("local accuracy and dummy features") {
    auto table = fixtures::blobs(200, 5, 3, 17, 1.2);
    for (std::size_t r = 0; r < table.rows(); ++r) table.features[r * 5 + 4] = 3.25;  // constant -> never split on
    gbt::Hyperparams hp;
    hp.n_estimators = 15;
    const auto e = gbt::train(table, hp);
    const auto mat = shap::tree_shap(e, table);
    double worst = 0.0;
    for (std::size_t s = 0; s < table.rows(); ++s) {
        const auto margin = gbt::predict_margin(e, table.row(s));
        for (std::size_t k = 0; k < 3; ++k) {
            double sum = mat.base_values[k];
            for (std::size_t i = 0; i < 5; ++i) sum += mat.at(s, k, i);
            worst = std::max(worst, std::abs(sum - margin[k]));
            CHECK(mat.at(s, k, 4) == 0.0);
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("linearity over trees") {
    const auto e = trained(31, 150, 4, 2, 2, 3);
    REQUIRE(e.trees.size() == 4);
    const auto t = fixtures::blobs(15, 4, 2, 32);
    const auto both = shap::tree_shap(e, t);
    for (std::size_t s = 0; s < t.rows(); ++s) {
        for (std::size_t k = 0; k < 2; ++k) {
            std::vector<double> sum(4, 0.0);
            for (std::size_t tr = k; tr < e.trees.size(); tr += 2) {
                std::vector<double> one(4, 0.0);
                shap::tree_shap_single(e.trees[tr], t.row(s), one);
                for (std::size_t i = 0; i < 4; ++i) sum[i] += one[i];
            }
            for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(both.at(s, k, i) - sum[i]) <= 1e-9);
        }
    }
}

TEST_CASE("tree_shap is independent of worker count") {
    const auto e = trained(5, 200, 6, 3, 5, 4);
    const auto t = fixtures::blobs(64, 6, 3, 6);
    ::setenv("APTIDS_THREADS", "1", 1);
    const auto a = shap::tree_shap(e, t);
    ::setenv("APTIDS_THREADS", "4", 1);
    const auto b = shap::tree_shap(e, t);
    ::unsetenv("APTIDS_THREADS");
    CHECK(a.values == b.values);
}

TEST_CASE("global and per-class rankings") {
    shap::ShapMatrix m;
    m.n_samples = 2;
    m.n_classes = 2;
    m.n_features = 3;
    m.feature_names = {"b", "a", "c"};
    m.class_names = {"x", "y"};
    m.base_values = {0, 0};
    m.values.assign(12, 0.0);

    SUBCASE("all zero -> lexicographic") {
        const auto g = shap::global_importance(m);
        CHECK(g.entries == std::vector<std::pair<std::string, double>>{{"a", 0}, {"b", 0}, {"c", 0}});
    }
    SUBCASE("hand-computed aggregate") {
        // sample 0: class x (1,-2,0), class y (0,0,4); sample 1: x (-3,0,0), y (0,2,0)
        m.at(0, 0, 0) = 1; m.at(0, 0, 1) = -2; m.at(0, 1, 2) = 4;
        m.at(1, 0, 0) = -3; m.at(1, 1, 1) = 2;
        // Independent pass: sum_k mean_s |phi|
        std::map<std::string, double> expected;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t k = 0; k < 2; ++k)
                expected[m.feature_names[i]] += (std::abs(m.at(0, k, i)) + std::abs(m.at(1, k, i))) / 2.0;
        const auto g = shap::global_importance(m);
        REQUIRE(g.entries.size() == 3);
        for (const auto& [name, score] : g.entries) CHECK(score == doctest::Approx(expected[name]).epsilon(1e-15));
        // a, b and c all score 2: the tie falls back to name order.
        CHECK(g.entries[0].first == "a");
        CHECK(g.entries[2].first == "c");
    }
    SUBCASE("per class") {
        m.at(0, 1, 2) = 4;
        m.at(1, 1, 2) = -1;
        const auto pc = shap::per_class_importance(m, 1);
        CHECK(pc.entries[0] == std::pair<std::string, double>{"c", 2.5});
        CHECK(pc.scope == shap::ImportanceRanking::Scope::per_class);
        const auto other = shap::per_class_importance(m, 0);
        for (const auto& [name, score] : other.entries) CHECK(score == 0.0);
        CHECK_THROWS_AS(shap::per_class_importance(m, 2), Error);
    }
}

TEST_CASE("feature used only by one class's trees ranks first there") {
    // Class 1 trees split only on feature 2; class 0 trees only on feature 0.
    const auto e = ensemble_of({stump(0, 0.0, -1, 1), stump(2, 0.0, -2, 2), stump(0, 1.0, 0.5, -0.5),
                                stump(2, -1.0, 1, 0)},
                               4, 2);
    const auto t = fixtures::blobs(40, 4, 2, 99);
    const auto mat = shap::tree_shap(e, t);
    const auto pc = shap::per_class_importance(mat, 1);
    CHECK(pc.entries[0].first == "f2");
    for (std::size_t i = 1; i < pc.entries.size(); ++i) CHECK(pc.entries[i].second == 0.0);
    CHECK(shap::per_class_importance(mat, 0).entries[0].first == "f0");
}

TEST_CASE("single-sample matrix scores equal |phi|") {
    const auto e = trained(8, 100, 3, 2, 3, 3);
    const auto t = fixtures::blobs(1, 3, 2, 81);
    const auto mat = shap::tree_shap(e, t);
    const auto pc = shap::per_class_importance(mat, 0);
    for (const auto& [name, score] : pc.entries) {
        const auto i = static_cast<std::size_t>(name[1] - '0');
        CHECK(score == std::abs(mat.at(0, 0, i)));
    }
}

TEST_CASE("exports round-trip and recompute") {
    const auto e = trained(12, 150, 4, 3, 4, 3);
    const auto t = fixtures::blobs(30, 4, 3, 13);
    const auto mat = shap::tree_shap(e, t);
    const auto dir = fixtures::temp_dir("shap_io");
    shap::write_shap_csv(mat, dir / "phi.csv");
    const auto global = shap::global_importance(mat);
    shap::write_ranking_csv(global, dir / "rank.csv");
    const auto back = shap::read_ranking_csv(dir / "rank.csv");
    CHECK(back.entries == global.entries);

    // Offline recomputation from the long-format export.
    std::istringstream in(read_text(dir / "phi.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_index,class,feature,phi");
    std::map<std::string, double> acc;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 4);
        acc[cells[2]] += std::abs(std::stod(cells[3]));
        ++lines;
    }
    CHECK(lines == 30 * 3 * 4);
    for (const auto& [name, score] : global.entries)
        CHECK(score == doctest::Approx(acc[name] / 30.0).epsilon(1e-12));

    shap::write_base_values_json(mat, dir / "base.json");
    CHECK(read_text(dir / "base.json").find("class0") != std::string::npos);
}
