#pragma once

// Gradient-boosted regression trees with exact split search. Small-data
// settings only (a few thousand rows, a few hundred features), so splits are
// found by presorted scans rather than histograms. Everything is
// deterministic: ties prefer the lowest feature index, then the lowest
// threshold, and row subsampling uses the seeded generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmix/errors.hpp"
#include "quadmix/rng.hpp"
#include "quadmix/util.hpp"

namespace quadmix {

struct TrainConfig {
    int n_trees = 300;
    int max_depth = 4;
    double learning_rate = 0.05;
    int min_samples_leaf = 5;
    double subsample = 0.8;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees < 1) throw DataError("gbdt config: n_trees must be >= 1");
        if (max_depth < 1) throw DataError("gbdt config: max_depth must be >= 1");
        if (!(learning_rate > 0.0)) throw DataError("gbdt config: learning_rate must be > 0");
        if (min_samples_leaf < 1) throw DataError("gbdt config: min_samples_leaf must be >= 1");
        if (!(subsample > 0.0 && subsample <= 1.0)) throw DataError("gbdt config: subsample must be in (0, 1]");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"n_trees", n_trees},
                              {"max_depth", max_depth},
                              {"learning_rate", learning_rate},
                              {"min_samples_leaf", min_samples_leaf},
                              {"subsample", subsample},
                              {"seed", seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.n_trees = j.value("n_trees", c.n_trees);
        c.max_depth = j.value("max_depth", c.max_depth);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
        c.subsample = j.value("subsample", c.subsample);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }

    static TrainConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open gbdt config: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("gbdt config parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

// Flat node arrays; feature == -1 marks a leaf.
struct RegressionTree {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> value;

    double eval(std::span<const double> x) const {
        int node = 0;
        while (feature[static_cast<std::size_t>(node)] >= 0) {
            const std::size_t n = static_cast<std::size_t>(node);
            node = x[static_cast<std::size_t>(feature[n])] <= threshold[n] ? left[n] : right[n];
        }
        return value[static_cast<std::size_t>(node)];
    }

    int depth() const {
        int best = 0;
        std::vector<std::pair<int, int>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [node, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            const std::size_t n = static_cast<std::size_t>(node);
            if (feature[n] >= 0) {
                stack.push_back({left[n], d + 1});
                stack.push_back({right[n], d + 1});
            }
        }
        return best;
    }
};

struct GBDTModel {
    int n_features = 0;
    double base_prediction = 0.0;
    double learning_rate = 0.0;
    std::vector<RegressionTree> trees;
    TrainConfig config;

    double predict(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != n_features) {
            throw DataError("predict: feature vector length " + std::to_string(x.size()) + " != " +
                            std::to_string(n_features));
        }
        double acc = 0.0;
        for (const auto& t : trees) acc += t.eval(x);
        return base_prediction + learning_rate * acc;
    }

    // Ensemble truncated to the first n trees; stagewise diagnostics.
    double predict_prefix(std::span<const double> x, std::size_t n) const {
        if (static_cast<int>(x.size()) != n_features) throw DataError("predict_prefix: dimension mismatch");
        double acc = 0.0;
        for (std::size_t t = 0; t < n && t < trees.size(); ++t) acc += trees[t].eval(x);
        return base_prediction + learning_rate * acc;
    }

    nlohmann::json to_json() const {
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& t : trees) {
            jt.push_back(nlohmann::json{{"feature", t.feature},
                                        {"threshold", t.threshold},
                                        {"left", t.left},
                                        {"right", t.right},
                                        {"value", t.value}});
        }
        return nlohmann::json{{"n_features", n_features},
                              {"base_prediction", base_prediction},
                              {"learning_rate", learning_rate},
                              {"trees", jt},
                              {"config", config.to_json()}};
    }

    static GBDTModel from_json(const nlohmann::json& j) {
        GBDTModel m;
        m.n_features = j.at("n_features").get<int>();
        m.base_prediction = j.at("base_prediction").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("config")) m.config = TrainConfig::from_json(j.at("config"));
        for (const auto& tj : j.at("trees")) {
            RegressionTree t;
            t.feature = tj.at("feature").get<std::vector<int>>();
            t.threshold = tj.at("threshold").get<std::vector<double>>();
            t.left = tj.at("left").get<std::vector<int>>();
            t.right = tj.at("right").get<std::vector<int>>();
            t.value = tj.at("value").get<std::vector<double>>();
            m.trees.push_back(std::move(t));
        }
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write model file: " + path);
        out << to_json().dump() << "\n";
    }

    static GBDTModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open model file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("model parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

namespace detail {

struct BuildNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double sum = 0.0;  // residual sum over structure rows
    int count = 0;
    int depth = 0;
};

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;

    bool beats(const SplitChoice& other) const {
        if (gain != other.gain) return gain > other.gain;
        if (feature != other.feature) return feature < other.feature;
        return threshold < other.threshold;
    }
};

}  // namespace detail

// Stagewise least-squares boosting: each tree fits the current residuals.
// Tree structure is searched on the per-tree row subsample; leaf values are
// residual means over ALL training rows routed to the leaf, which keeps the
// training MSE non-increasing per stage for learning_rate <= 2.
inline GBDTModel fit(const std::vector<double>& features, std::size_t n_features, const std::vector<double>& targets,
                     const TrainConfig& config) {
    config.validate();
    if (n_features == 0) throw DataError("fit: zero features");
    const std::size_t K = targets.size();
    if (K < 2) throw DataError("fit: need at least 2 training rows");
    if (features.size() != K * n_features) throw DataError("fit: feature matrix shape mismatch");
    for (double v : features) {
        if (!std::isfinite(v)) throw DataError("fit: non-finite feature value");
    }
    for (double y : targets) {
        if (!std::isfinite(y)) throw DataError("fit: non-finite target");
    }

    GBDTModel model;
    model.n_features = static_cast<int>(n_features);
    model.learning_rate = config.learning_rate;
    model.config = config;
    {
        CompensatedSum s;
        for (double y : targets) s.add(y);
        model.base_prediction = s.value() / static_cast<double>(K);
    }

    std::vector<double> residual(K);
    for (std::size_t i = 0; i < K; ++i) residual[i] = targets[i] - model.base_prediction;

    // Presort once: row indices ordered by feature value, ties by row index.
    std::vector<std::vector<std::uint32_t>> order(n_features);
    for (std::size_t d = 0; d < n_features; ++d) {
        auto& idx = order[d];
        idx.resize(K);
        std::iota(idx.begin(), idx.end(), 0u);
        std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = features[a * n_features + d];
            const double vb = features[b * n_features + d];
            if (va != vb) return va < vb;
            return a < b;
        });
    }

    const std::size_t sub_count =
        config.subsample >= 1.0 ? K
                                : std::max<std::size_t>(
                                      2, static_cast<std::size_t>(config.subsample * static_cast<double>(K)));
    std::vector<std::uint32_t> pick(K);
    std::vector<int> node_of_row(K);
    std::vector<int> row_leaf(K);
    constexpr double kMinGain = 1e-12;

    for (int t = 0; t < config.n_trees; ++t) {
        // structure rows for this stage
        if (sub_count >= K) {
            std::fill(node_of_row.begin(), node_of_row.end(), 0);
        } else {
            std::fill(node_of_row.begin(), node_of_row.end(), -1);
            std::iota(pick.begin(), pick.end(), 0u);
            Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
            for (std::size_t i = 0; i < sub_count; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.next_below(K - i));
                std::swap(pick[i], pick[j]);
                node_of_row[pick[i]] = 0;
            }
        }

        std::vector<detail::BuildNode> nodes(1);
        nodes[0].depth = 0;
        {
            double s = 0.0;
            int c = 0;
            for (std::size_t i = 0; i < K; ++i) {
                if (node_of_row[i] == 0) {
                    s += residual[i];
                    ++c;
                }
            }
            nodes[0].sum = s;
            nodes[0].count = c;
        }

        std::vector<int> frontier{0};
        std::vector<detail::SplitChoice> best;
        std::vector<double> left_sum, last_val;
        std::vector<int> left_cnt;
        std::vector<char> active;

        while (!frontier.empty() && nodes[static_cast<std::size_t>(frontier.front())].depth < config.max_depth) {
            const std::size_t n_nodes = nodes.size();
            best.assign(n_nodes, {});
            active.assign(n_nodes, 0);
            bool any_active = false;
            for (int n : frontier) {
                if (nodes[static_cast<std::size_t>(n)].count >= 2 * config.min_samples_leaf) {
                    active[static_cast<std::size_t>(n)] = 1;
                    any_active = true;
                }
            }
            if (!any_active) break;

            left_sum.assign(n_nodes, 0.0);
            last_val.assign(n_nodes, 0.0);
            left_cnt.assign(n_nodes, 0);
            for (std::size_t d = 0; d < n_features; ++d) {
                for (int n : frontier) {
                    left_sum[static_cast<std::size_t>(n)] = 0.0;
                    left_cnt[static_cast<std::size_t>(n)] = 0;
                }
                for (const std::uint32_t row : order[d]) {
                    const int n = node_of_row[row];
                    if (n < 0 || !active[static_cast<std::size_t>(n)]) continue;
                    const std::size_t ni = static_cast<std::size_t>(n);
                    const double v = features[row * n_features + d];
                    if (left_cnt[ni] > 0 && v > last_val[ni]) {
                        const int nl = left_cnt[ni];
                        const int nr = nodes[ni].count - nl;
                        if (nl >= config.min_samples_leaf && nr >= config.min_samples_leaf) {
                            double thr = last_val[ni] + 0.5 * (v - last_val[ni]);
                            if (!(thr < v)) thr = last_val[ni];
                            const double ls = left_sum[ni];
                            const double rs = nodes[ni].sum - ls;
                            const double gain = ls * ls / nl + rs * rs / nr -
                                                nodes[ni].sum * nodes[ni].sum / nodes[ni].count;
                            const detail::SplitChoice cand{gain, static_cast<int>(d), thr};
                            if (cand.gain > kMinGain && cand.beats(best[ni])) best[ni] = cand;
                        }
                    }
                    left_sum[ni] += residual[row];
                    left_cnt[ni] += 1;
                    last_val[ni] = v;
                }
            }

            std::vector<int> next_frontier;
            bool split_any = false;
            for (int n : frontier) {
                const std::size_t ni = static_cast<std::size_t>(n);
                if (best[ni].feature < 0) continue;
                detail::BuildNode l, r;
                l.depth = r.depth = nodes[ni].depth + 1;
                nodes[ni].feature = best[ni].feature;
                nodes[ni].threshold = best[ni].threshold;
                nodes[ni].left = static_cast<int>(nodes.size());
                nodes[ni].right = static_cast<int>(nodes.size()) + 1;
                next_frontier.push_back(nodes[ni].left);
                next_frontier.push_back(nodes[ni].right);
                nodes.push_back(l);
                nodes.push_back(r);
                split_any = true;
            }
            if (!split_any) break;
            for (std::size_t i = 0; i < K; ++i) {
                const int n = node_of_row[i];
                if (n < 0) continue;
                const std::size_t ni = static_cast<std::size_t>(n);
                if (nodes[ni].feature < 0) continue;
                const int child = features[i * n_features + static_cast<std::size_t>(nodes[ni].feature)] <=
                                          nodes[ni].threshold
                                      ? nodes[ni].left
                                      : nodes[ni].right;
                node_of_row[i] = child;
                nodes[static_cast<std::size_t>(child)].sum += residual[i];
                nodes[static_cast<std::size_t>(child)].count += 1;
            }
            frontier = std::move(next_frontier);
        }

        // Leaf values: residual means over all training rows.
        RegressionTree tree;
        const std::size_t n_nodes = nodes.size();
        tree.feature.resize(n_nodes);
        tree.threshold.resize(n_nodes);
        tree.left.resize(n_nodes);
        tree.right.resize(n_nodes);
        tree.value.assign(n_nodes, 0.0);
        for (std::size_t n = 0; n < n_nodes; ++n) {
            tree.feature[n] = nodes[n].feature;
            tree.threshold[n] = nodes[n].threshold;
            tree.left[n] = nodes[n].left;
            tree.right[n] = nodes[n].right;
        }
        std::vector<double> leaf_sum(n_nodes, 0.0);
        std::vector<int> leaf_cnt(n_nodes, 0);
        for (std::size_t i = 0; i < K; ++i) {
            int node = 0;
            while (tree.feature[static_cast<std::size_t>(node)] >= 0) {
                const std::size_t nn = static_cast<std::size_t>(node);
                node = features[i * n_features + static_cast<std::size_t>(tree.feature[nn])] <= tree.threshold[nn]
                           ? tree.left[nn]
                           : tree.right[nn];
            }
            row_leaf[i] = node;
            leaf_sum[static_cast<std::size_t>(node)] += residual[i];
            leaf_cnt[static_cast<std::size_t>(node)] += 1;
        }
        for (std::size_t n = 0; n < n_nodes; ++n) {
            if (tree.feature[n] < 0 && leaf_cnt[n] > 0) {
                tree.value[n] = leaf_sum[n] / leaf_cnt[n];
            }
        }
        for (std::size_t i = 0; i < K; ++i) {
            residual[i] -= config.learning_rate * tree.value[static_cast<std::size_t>(row_leaf[i])];
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

struct EvalReport {
    double mae = 0.0;
    std::vector<double> residuals;  // actual - predicted

    nlohmann::json to_json() const {
        return nlohmann::json{{"mae", mae}, {"count", residuals.size()}, {"residuals", residuals}};
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write eval report: " + path);
        out << to_json().dump() << "\n";
    }
};

inline EvalReport evaluate_mae(const GBDTModel& model, const std::vector<double>& features, std::size_t n_features,
                               const std::vector<double>& targets) {
    if (targets.empty()) throw DataError("evaluate_mae: empty evaluation set");
    if (features.size() != targets.size() * n_features) throw DataError("evaluate_mae: shape mismatch");
    EvalReport rep;
    rep.residuals.reserve(targets.size());
    CompensatedSum abs_sum;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double pred = model.predict(std::span<const double>(features.data() + i * n_features, n_features));
        rep.residuals.push_back(targets[i] - pred);
        abs_sum.add(std::abs(rep.residuals.back()));
    }
    rep.mae = abs_sum.value() / static_cast<double>(targets.size());
    return rep;
}

}  // namespace quadmix
