#include <memory>
#include <set>

#include "doctest.h"
#include "primkit/forest.hpp"
#include "primkit/rng.hpp"

using namespace primkit;
using namespace primkit::forest;

namespace {

// Exhaustive CART oracle: tries every feature and every midpoint threshold,
// recursing until purity. Mirrors the production split rules (gini,
// midpoints, lowest-feature/lowest-threshold ties) with independent code.
struct OracleTree {
    struct ONode {
        int feature = -1;
        double threshold = 0;
        std::unique_ptr<ONode> left, right;
        std::array<double, 5> proba{};
    };
    std::unique_ptr<ONode> root;

    static std::array<double, 5> probs_of(const std::vector<int>& idx,
                                          const std::vector<int>& y) {
        std::array<double, 5> p{};
        for (int i : idx) p[size_t(y[size_t(i)])] += 1.0;
        for (auto& v : p) v /= double(idx.size());
        return p;
    }

    static double gini_of(const std::vector<int>& idx,
                          const std::vector<int>& y) {
        auto p = probs_of(idx, y);
        double g = 1;
        for (double v : p) g -= v * v;
        return g;
    }

    static std::unique_ptr<ONode> build(const FeatureMatrix& x,
                                        const std::vector<int>& y,
                                        std::vector<int> idx,
                                        int min_split, int min_leaf) {
        auto node = std::make_unique<ONode>();
        node->proba = probs_of(idx, y);
        const double parent = gini_of(idx, y);
        if (long(idx.size()) < min_split || parent == 0.0) return node;

        double best = parent - 1e-12;
        int best_f = -1;
        double best_thr = 0;
        for (int f = 0; f < int(x.cols()); ++f) {
            std::vector<double> vals;
            for (int i : idx) vals.push_back(double(x(i, f)));
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (size_t v = 0; v + 1 < vals.size(); ++v) {
                const double thr = (vals[v] + vals[v + 1]) / 2;
                std::vector<int> l, r;
                for (int i : idx) {
                    (double(x(i, f)) <= thr ? l : r).push_back(i);
                }
                if (long(l.size()) < min_leaf || long(r.size()) < min_leaf) {
                    continue;
                }
                const double w = (double(l.size()) * gini_of(l, y) +
                                  double(r.size()) * gini_of(r, y)) /
                                 double(idx.size());
                if (w < best) {
                    best = w;
                    best_f = f;
                    best_thr = thr;
                }
            }
        }
        if (best_f < 0) return node;
        node->feature = best_f;
        node->threshold = best_thr;
        std::vector<int> l, r;
        for (int i : idx) {
            (double(x(i, best_f)) <= best_thr ? l : r).push_back(i);
        }
        node->left = build(x, y, std::move(l), min_split, min_leaf);
        node->right = build(x, y, std::move(r), min_split, min_leaf);
        return node;
    }

    std::array<double, 5> predict(const float* row) const {
        const ONode* at = root.get();
        while (at->feature >= 0) {
            at = double(row[at->feature]) <= at->threshold ? at->left.get()
                                                           : at->right.get();
        }
        return at->proba;
    }
};

FeatureMatrix separable_data(int n_per_class, std::vector<int>& y,
                             uint64_t seed = 0) {
    rng::Stream rs(seed);
    FeatureMatrix x(n_per_class * 5, 2);
    y.clear();
    for (int k = 0; k < 5; ++k) {
        for (int i = 0; i < n_per_class; ++i) {
            const int row = k * n_per_class + i;
            x(row, 0) = float(k * 10 + rs.uniform(-1, 1));
            x(row, 1) = float(rs.normal());
            y.push_back(k);
        }
    }
    return x;
}

int argmax5(const Eigen::MatrixXd& p, int row) {
    int best = 0;
    for (int k = 1; k < 5; ++k) {
        if (p(row, k) > p(row, best)) best = k;
    }
    return best;
}

}  // namespace

TEST_CASE("gini impurity worked examples") {
    CHECK(gini_impurity({4, 0, 0, 0, 0}) == 0.0);
    CHECK(gini_impurity({2, 2, 0, 0, 0}) == doctest::Approx(0.5));
    CHECK(gini_impurity({3, 3, 3, 3, 3}) == doctest::Approx(0.8));
    CHECK_THROWS_AS(gini_impurity({0, 0, 0, 0, 0}), Error);
}

TEST_CASE("best_split separates a 1-D two-cluster node at the midpoint") {
    FeatureMatrix x(4, 1);
    x << 1, 2, 10, 11;
    std::vector<int> y = {0, 0, 1, 1};
    auto choice = best_split(x, y, {0, 1, 2, 3}, {0}, 1);
    REQUIRE(choice.has_value());
    CHECK(choice->feature == 0);
    CHECK(choice->threshold == doctest::Approx(6.0));
}

TEST_CASE("best_split returns none for unsplittable nodes") {
    FeatureMatrix x(3, 1);
    x << 5, 5, 5;
    std::vector<int> y = {0, 1, 0};
    CHECK(!best_split(x, y, {0, 1, 2}, {0}, 1).has_value());

    // leaf constraint can forbid every boundary
    FeatureMatrix x2(4, 1);
    x2 << 1, 2, 3, 4;
    std::vector<int> y2 = {0, 1, 0, 1};
    CHECK(!best_split(x2, y2, {0, 1, 2, 3}, {0}, 2).has_value());
}

TEST_CASE("best_split breaks ties by lowest feature index") {
    // two identical separating features; index 0 must win
    FeatureMatrix x(4, 2);
    x << 1, 1, 2, 2, 10, 10, 11, 11;
    std::vector<int> y = {0, 0, 1, 1};
    auto choice = best_split(x, y, {0, 1, 2, 3}, {1, 0}, 1);
    REQUIRE(choice.has_value());
    CHECK(choice->feature == 0);
}

TEST_CASE("single unbootstrapped tree equals the exhaustive CART oracle") {
    rng::Stream rs(40);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 10;
        FeatureMatrix x(n, 3);
        std::vector<int> y;
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < 3; ++f) {
                x(i, f) = float(rs.uniform_int(0, 4));
            }
            y.push_back(int(rs.uniform_int(0, 2)));
        }
        ForestConfig cfg;
        cfg.n_trees = 1;
        cfg.bootstrap = false;
        cfg.max_features = 3;  // all features at every node
        cfg.seed = trial;
        RandomForest forest = fit_forest(x, y, cfg, 1);

        OracleTree oracle;
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[size_t(i)] = i;
        oracle.root = OracleTree::build(x, y, idx, cfg.min_samples_split,
                                        cfg.min_samples_leaf);

        for (int i = 0; i < n; ++i) {
            const auto& fast = forest.trees[0].predict_row(x.row(i).data());
            const auto slow = oracle.predict(x.row(i).data());
            for (int k = 0; k < 5; ++k) {
                CHECK(double(fast[size_t(k)]) ==
                      doctest::Approx(slow[size_t(k)]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("forest fits separable data to 100% training accuracy") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(20, y, 7);
    ForestConfig cfg;
    cfg.n_trees = 20;
    cfg.seed = 3;
    RandomForest forest = fit_forest(x, y, cfg, 1);
    auto proba = forest_predict_proba(forest, x);
    for (int i = 0; i < int(x.rows()); ++i) {
        CHECK(argmax5(proba, i) == y[size_t(i)]);
    }
}

TEST_CASE("forest fitting is deterministic given the seed") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(10, y, 9);
    ForestConfig cfg;
    cfg.n_trees = 8;
    cfg.seed = 42;
    RandomForest a = fit_forest(x, y, cfg, 1);
    RandomForest b = fit_forest(x, y, cfg, 1);
    REQUIRE(a.trees.size() == b.trees.size());
    for (size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (size_t i = 0; i < a.trees[t].nodes.size(); ++i) {
            CHECK(a.trees[t].nodes[i].feature == b.trees[t].nodes[i].feature);
            CHECK(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
            CHECK(a.trees[t].nodes[i].proba == b.trees[t].nodes[i].proba);
        }
    }
}

TEST_CASE("forest fitting is reproducible across thread counts") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(12, y, 13);
    ForestConfig cfg;
    cfg.n_trees = 12;
    cfg.seed = 5;
    RandomForest serial = fit_forest(x, y, cfg, 1);
    RandomForest parallel = fit_forest(x, y, cfg, 4);
    for (size_t t = 0; t < serial.trees.size(); ++t) {
        REQUIRE(serial.trees[t].nodes.size() == parallel.trees[t].nodes.size());
        for (size_t i = 0; i < serial.trees[t].nodes.size(); ++i) {
            CHECK(serial.trees[t].nodes[i].feature ==
                  parallel.trees[t].nodes[i].feature);
            CHECK(serial.trees[t].nodes[i].threshold ==
                  parallel.trees[t].nodes[i].threshold);
        }
        CHECK(serial.inbag_counts[t] == parallel.inbag_counts[t]);
    }
}

TEST_CASE("growing the forest keeps earlier trees unchanged") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(10, y, 21);
    ForestConfig small;
    small.n_trees = 4;
    small.seed = 6;
    ForestConfig large = small;
    large.n_trees = 8;
    RandomForest a = fit_forest(x, y, small, 1);
    RandomForest b = fit_forest(x, y, large, 1);
    for (size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (size_t i = 0; i < a.trees[t].nodes.size(); ++i) {
            CHECK(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
        }
    }
}

TEST_CASE("predict_proba averages leaf vectors and stays on the simplex") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(8, y, 33);
    ForestConfig cfg;
    cfg.n_trees = 7;
    cfg.seed = 11;
    RandomForest forest = fit_forest(x, y, cfg, 1);
    rng::Stream rs(2);
    FeatureMatrix probe(40, 2);
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
        probe.data()[i] = float(rs.uniform(-5, 55));
    }
    auto proba = forest_predict_proba(forest, probe);
    for (int i = 0; i < 40; ++i) {
        double sum = 0;
        for (int k = 0; k < 5; ++k) sum += proba(i, k);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("unanimous trees give probability one; two-tree average halves") {
    // hand-built forest exercising the averaging rule directly
    RandomForest forest;
    forest.n_features = 1;
    forest.config.n_trees = 2;
    DecisionTree t1, t2;
    Node leaf1;
    leaf1.proba = {1, 0, 0, 0, 0};
    t1.nodes.push_back(leaf1);
    Node leaf2;
    leaf2.proba = {0, 1, 0, 0, 0};
    t2.nodes.push_back(leaf2);
    forest.trees = {t1, t2};
    FeatureMatrix x(1, 1);
    x << 0.0f;
    auto avg = forest_predict_proba(forest, x);
    CHECK(avg(0, 0) == doctest::Approx(0.5));
    CHECK(avg(0, 1) == doctest::Approx(0.5));

    forest.trees = {t1, t1};
    auto unan = forest_predict_proba(forest, x);
    CHECK(unan(0, 0) == 1.0);
}

TEST_CASE("predict rejects feature dimension mismatches") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(6, y, 3);
    ForestConfig cfg;
    cfg.n_trees = 2;
    RandomForest forest = fit_forest(x, y, cfg, 1);
    FeatureMatrix bad(1, 5);
    CHECK_THROWS_AS(forest_predict_proba(forest, bad), ContractError);
}

TEST_CASE("feature permutation applied to data and trees is a no-op") {
    std::vector<int> y;
    rng::Stream rs(17);
    FeatureMatrix x(60, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x.data()[i] = float(rs.normal());
    }
    for (int i = 0; i < 60; ++i) y.push_back(int(rs.uniform_int(0, 4)));
    ForestConfig cfg;
    cfg.n_trees = 6;
    cfg.seed = 8;
    RandomForest forest = fit_forest(x, y, cfg, 1);

    const std::array<int, 4> perm = {2, 0, 3, 1};  // new index of old feature
    RandomForest permuted = forest;
    for (auto& tree : permuted.trees) {
        for (auto& node : tree.nodes) {
            if (!node.is_leaf()) node.feature = perm[size_t(node.feature)];
        }
    }
    FeatureMatrix xp(x.rows(), x.cols());
    for (int f = 0; f < 4; ++f) xp.col(perm[size_t(f)]) = x.col(f);

    auto a = forest_predict_proba(forest, x);
    auto b = forest_predict_proba(permuted, xp);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training samples land in leaves whose counts include them") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(10, y, 50);
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.max_features = 2;
    cfg.seed = 10;
    RandomForest forest = fit_forest(x, y, cfg, 1);
    for (int i = 0; i < int(x.rows()); ++i) {
        const auto& p = forest.trees[0].predict_row(x.row(i).data());
        CHECK(p[size_t(y[size_t(i)])] > 0.0f);
    }
}

TEST_CASE("out-of-bag accuracy on separable data exceeds 0.9") {
    std::vector<int> y;
    FeatureMatrix x = separable_data(30, y, 77);
    ForestConfig cfg;
    cfg.seed = 12;
    RandomForest forest = fit_forest(x, y, cfg, 0);

    long correct = 0, counted = 0;
    for (int i = 0; i < int(x.rows()); ++i) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(5);
        int oob_trees = 0;
        for (size_t t = 0; t < forest.trees.size(); ++t) {
            if (forest.inbag_counts[t][size_t(i)] != 0) continue;
            const auto& p = forest.trees[t].predict_row(x.row(i).data());
            for (int k = 0; k < 5; ++k) acc[k] += double(p[size_t(k)]);
            ++oob_trees;
        }
        if (oob_trees == 0) continue;
        int best = 0;
        for (int k = 1; k < 5; ++k) {
            if (acc[k] > acc[best]) best = k;
        }
        ++counted;
        if (best == y[size_t(i)]) ++correct;
    }
    REQUIRE(counted > 0);
    CHECK(double(correct) / double(counted) >= 0.9);
}
