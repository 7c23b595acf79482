#include "primkit/forest.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <atomic>
#include <thread>

#include "primkit/rng.hpp"
#include "primkit/threads.hpp"

namespace primkit::forest {

using data::kNumPrimitives;

const std::array<float, kNumPrimitives>& DecisionTree::predict_row(
    const float* x) const {
    int at = 0;
    while (!nodes[size_t(at)].is_leaf()) {
        const Node& n = nodes[size_t(at)];
        at = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[size_t(at)].proba;
}

double gini_impurity(const std::array<long, kNumPrimitives>& counts) {
    long total = 0;
    for (long c : counts) {
        if (c < 0) throw Error("gini_impurity: negative count");
        total += c;
    }
    if (total == 0) throw Error("gini_impurity: degenerate all-zero counts");
    double sum_sq = 0;
    for (long c : counts) {
        const double p = double(c) / double(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

std::optional<SplitChoice> best_split(const FeatureMatrix& x,
                                      const std::vector<int>& y,
                                      const std::vector<int>& sample_idx,
                                      const std::vector<int>& candidate_features,
                                      int min_samples_leaf) {
    const long n = long(sample_idx.size());
    std::array<long, kNumPrimitives> total_counts{};
    for (int i : sample_idx) total_counts[size_t(y[size_t(i)])]++;
    const double parent = gini_impurity(total_counts);

    std::vector<int> features = candidate_features;
    std::sort(features.begin(), features.end());

    double best_score = parent - 1e-12;
    SplitChoice best;
    bool found = false;

    std::vector<std::pair<float, int>> ordered(sample_idx.size());
    for (int f : features) {
        for (size_t i = 0; i < sample_idx.size(); ++i) {
            const int idx = sample_idx[i];
            ordered[i] = {x(idx, f), y[size_t(idx)]};
        }
        std::sort(ordered.begin(), ordered.end());

        std::array<long, kNumPrimitives> left{};
        std::array<long, kNumPrimitives> right = total_counts;
        long n_left = 0;
        for (size_t i = 0; i + 1 < ordered.size(); ++i) {
            left[size_t(ordered[i].second)]++;
            right[size_t(ordered[i].second)]--;
            ++n_left;
            if (ordered[i].first == ordered[i + 1].first) continue;
            if (n_left < min_samples_leaf || n - n_left < min_samples_leaf) {
                continue;
            }
            const double weighted =
                (double(n_left) * gini_impurity(left) +
                 double(n - n_left) * gini_impurity(right)) /
                double(n);
            if (weighted < best_score) {
                const double a = double(ordered[i].first);
                const double b = double(ordered[i + 1].first);
                float thr = float((a + b) / 2.0);
                // float rounding must keep the threshold strictly below the
                // right-hand value so both children stay non-empty
                if (!(thr < ordered[i + 1].first)) thr = ordered[i].first;
                best_score = weighted;
                best = {f, thr};
                found = true;
            }
        }
    }
    if (!found) return std::nullopt;
    return best;
}

namespace {

struct BuildFrame {
    std::vector<int> samples;
    int node_index;
};

std::array<float, kNumPrimitives> leaf_proba(const std::vector<int>& samples,
                                             const std::vector<int>& y) {
    std::array<long, kNumPrimitives> counts{};
    for (int i : samples) counts[size_t(y[size_t(i)])]++;
    std::array<float, kNumPrimitives> proba{};
    for (size_t k = 0; k < kNumPrimitives; ++k) {
        proba[k] = float(double(counts[k]) / double(samples.size()));
    }
    return proba;
}

bool is_pure(const std::vector<int>& samples, const std::vector<int>& y) {
    for (size_t i = 1; i < samples.size(); ++i) {
        if (y[size_t(samples[i])] != y[size_t(samples[0])]) return false;
    }
    return true;
}

// partial Fisher-Yates draw of k distinct feature indices
std::vector<int> sample_features(int n_features, int k, rng::Stream& rs) {
    std::vector<int> pool(static_cast<size_t>(n_features));
    for (int i = 0; i < n_features; ++i) pool[size_t(i)] = i;
    std::vector<int> out;
    out.reserve(size_t(k));
    for (int i = 0; i < k; ++i) {
        const int j = int(rs.uniform_int(i, n_features - 1));
        std::swap(pool[size_t(i)], pool[size_t(j)]);
        out.push_back(pool[size_t(i)]);
    }
    return out;
}

DecisionTree grow_tree(const FeatureMatrix& x, const std::vector<int>& y,
                       std::vector<int> root_samples, const ForestConfig& cfg,
                       int features_per_node, rng::Stream& rs) {
    DecisionTree tree;
    std::vector<BuildFrame> stack;
    tree.nodes.emplace_back();
    stack.push_back({std::move(root_samples), 0});

    while (!stack.empty()) {
        BuildFrame frame = std::move(stack.back());
        stack.pop_back();
        Node& node = tree.nodes[size_t(frame.node_index)];

        const bool splittable =
            long(frame.samples.size()) >= cfg.min_samples_split &&
            !is_pure(frame.samples, y);
        std::optional<SplitChoice> choice;
        if (splittable) {
            choice = best_split(x, y, frame.samples,
                                sample_features(int(x.cols()), features_per_node, rs),
                                cfg.min_samples_leaf);
        }
        if (!choice) {
            node.proba = leaf_proba(frame.samples, y);
            continue;
        }
        node.feature = choice->feature;
        node.threshold = choice->threshold;
        std::vector<int> left, right;
        for (int i : frame.samples) {
            (x(i, choice->feature) <= choice->threshold ? left : right)
                .push_back(i);
        }
        node.left = int(tree.nodes.size());
        node.right = int(tree.nodes.size()) + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        // left child on top of the stack so growth is depth-first,
        // left-to-right; rng consumption stays in node order
        const int left_index = tree.nodes[size_t(frame.node_index)].left;
        const int right_index = tree.nodes[size_t(frame.node_index)].right;
        stack.push_back({std::move(right), right_index});
        stack.push_back({std::move(left), left_index});
    }
    return tree;
}

}  // namespace

RandomForest fit_forest(const FeatureMatrix& x, const std::vector<int>& y,
                        const ForestConfig& config, int n_threads) {
    const long n = x.rows();
    if (n == 0 || size_t(n) != y.size()) {
        throw ConfigError("fit_forest: feature rows and labels disagree");
    }
    if (config.n_trees < 1) {
        throw ConfigError("fit_forest: n_trees must be >= 1");
    }
    std::set<int> distinct(y.begin(), y.end());
    if (distinct.size() < 2) {
        std::cerr << "fit_forest: warning: training data has a single label; "
                     "forest predictions are constant\n";
    }

    const int f = int(x.cols());
    int features_per_node = config.max_features > 0
                                ? std::min(config.max_features, f)
                                : int(std::floor(std::sqrt(double(f))));
    if (features_per_node < 1) features_per_node = 1;

    RandomForest forest;
    forest.config = config;
    forest.n_features = f;
    forest.trees.resize(size_t(config.n_trees));
    forest.inbag_counts.assign(size_t(config.n_trees),
                               std::vector<uint16_t>(size_t(n), 0));

    auto build_one = [&](int t) {
        // per-tree stream derived from (seed, tree index): adding trees never
        // reshuffles earlier ones
        rng::Stream rs(rng::derive(config.seed, "tree", uint64_t(t)));
        std::vector<int> samples;
        samples.reserve(size_t(n));
        auto& inbag = forest.inbag_counts[size_t(t)];
        if (config.bootstrap) {
            for (long i = 0; i < n; ++i) {
                const int j = int(rs.uniform_int(0, n - 1));
                samples.push_back(j);
                if (inbag[size_t(j)] < UINT16_MAX) inbag[size_t(j)]++;
            }
        } else {
            for (long i = 0; i < n; ++i) {
                samples.push_back(int(i));
                inbag[size_t(i)] = 1;
            }
        }
        forest.trees[size_t(t)] =
            grow_tree(x, y, std::move(samples), config, features_per_node, rs);
    };

    const int workers = std::min(worker_threads(n_threads), config.n_trees);
    if (workers <= 1) {
        for (int t = 0; t < config.n_trees; ++t) build_one(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < config.n_trees;
                     t = next.fetch_add(1)) {
                    build_one(t);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return forest;
}

Eigen::MatrixXd forest_predict_proba(const RandomForest& forest,
                                     const FeatureMatrix& x) {
    if (int(x.cols()) != forest.n_features) {
        throw ContractError("forest_predict_proba: " + std::to_string(x.cols()) +
                            " features do not match the " +
                            std::to_string(forest.n_features) +
                            " the forest was trained on");
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), kNumPrimitives);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (const auto& tree : forest.trees) {
            const auto& p = tree.predict_row(x.row(r).data());
            for (int k = 0; k < kNumPrimitives; ++k) {
                out(r, k) += double(p[size_t(k)]);
            }
        }
    }
    out /= double(forest.trees.size());
    return out;
}

}  // namespace primkit::forest
