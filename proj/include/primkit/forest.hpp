#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "primkit/errors.hpp"
#include "primkit/pipeline.hpp"

namespace primkit::forest {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ForestConfig {
    int n_trees = 100;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    // -1: floor(sqrt(F)) candidate features per node
    int max_features = -1;
    bool bootstrap = true;
    uint64_t seed = 0;
};

// Array-encoded CART node: internal nodes route on feature/threshold
// (x <= threshold goes left), leaves carry a label-probability vector.
struct Node {
    int feature = -1;
    float threshold = 0;
    int left = -1;
    int right = -1;
    std::array<float, data::kNumPrimitives> proba{};

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<Node> nodes;

    const std::array<float, data::kNumPrimitives>& predict_row(
        const float* x) const;
};

struct RandomForest {
    ForestConfig config;
    int n_features = 0;
    std::vector<DecisionTree> trees;
    // bootstrap multiplicity of each training sample, per tree; zero means
    // out-of-bag
    std::vector<std::vector<uint16_t>> inbag_counts;
};

// 1 - sum p_i^2 over label counts; all-zero counts are degenerate.
double gini_impurity(const std::array<long, data::kNumPrimitives>& counts);

struct SplitChoice {
    int feature = -1;
    float threshold = 0;
};

// Midpoint thresholds between consecutive sorted unique values of each
// candidate feature; minimizes weighted child Gini with ties broken by
// lowest feature index then lowest threshold. Returns nullopt when no split
// satisfies min_samples_leaf or improves on the parent impurity.
std::optional<SplitChoice> best_split(const FeatureMatrix& x,
                                      const std::vector<int>& y,
                                      const std::vector<int>& sample_idx,
                                      const std::vector<int>& candidate_features,
                                      int min_samples_leaf);

RandomForest fit_forest(const FeatureMatrix& x, const std::vector<int>& y,
                        const ForestConfig& config, int n_threads = 0);

// Mean of per-tree leaf probability vectors; rows sum to one.
Eigen::MatrixXd forest_predict_proba(const RandomForest& forest,
                                     const FeatureMatrix& x);

}  // namespace primkit::forest
