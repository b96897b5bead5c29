#pragma once

// Searches the parameter space through a trained regressor: score a large
// batch of candidates drawn from the same sampling scheme as the training
// configurations, then average the best few in flat coordinate space.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmix/errors.hpp"
#include "quadmix/gbdt.hpp"
#include "quadmix/parallel.hpp"
#include "quadmix/param_space.hpp"
#include "quadmix/params.hpp"
#include "quadmix/rng.hpp"

namespace quadmix {

struct SearchConfig {
    std::int64_t num_candidates = 100000;
    int top_k = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    std::int64_t batch_size = 10000;

    void validate() const {
        if (num_candidates < 1) throw DataError("search: num_candidates must be >= 1");
        if (top_k < 1) throw DataError("search: top_k must be >= 1");
        if (top_k > num_candidates) throw DataError("search: top_k exceeds num_candidates");
        if (batch_size < 1) throw DataError("search: batch_size must be >= 1");
    }
};

// Candidate generation is keyed by (seed, index); any candidate can be
// regenerated independently, so only indices and losses need to be stored.
inline std::vector<double> candidate_flat(int n_criteria, int n_domains, std::uint64_t seed, std::int64_t index) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
    return flatten(draw_params(n_criteria, n_domains, rng).second);
}

inline QuaDMixParams candidate_params(int n_criteria, int n_domains, std::uint64_t seed, std::int64_t index) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
    return draw_params(n_criteria, n_domains, rng).second;
}

struct RankedCandidate {
    std::int64_t index = 0;
    double predicted_loss = 0.0;
    std::vector<double> flat;
};

// Stable ascending sort by predicted loss; equal predictions keep draw order.
inline std::vector<RankedCandidate> rank_candidates(const GBDTModel& model,
                                                    const std::vector<std::vector<double>>& candidates) {
    std::vector<RankedCandidate> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        ranked.push_back(RankedCandidate{static_cast<std::int64_t>(i), model.predict(candidates[i]), candidates[i]});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        return a.predicted_loss < b.predicted_loss;
    });
    return ranked;
}

struct SearchResult {
    QuaDMixParams theta_star;
    double predicted_loss = 0.0;
    std::vector<RankedCandidate> top;  // ascending by predicted loss
    std::int64_t num_candidates = 0;
    std::uint64_t seed = 0;

    nlohmann::json report_json() const {
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& c : top) {
            jt.push_back(nlohmann::json{{"index", c.index}, {"predicted_loss", c.predicted_loss}, {"flat", c.flat}});
        }
        return nlohmann::json{{"num_candidates", num_candidates},
                              {"top_k", top.size()},
                              {"seed", seed},
                              {"predicted_loss", predicted_loss},
                              {"top", jt}};
    }

    void save_report(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write search report: " + path);
        out << report_json().dump() << "\n";
    }
};

// Candidates stream through in batches; only (loss, index) pairs survive per
// batch and the running top-k is merged sequentially, so memory stays flat in
// the candidate count.
inline SearchResult search(const GBDTModel& model, int n_criteria, int n_domains, const SearchConfig& config) {
    config.validate();
    const int expected_dim = (n_criteria + 4) * n_domains;
    if (model.n_features != expected_dim) {
        throw DataError("search: model expects " + std::to_string(model.n_features) + " features, space has " +
                        std::to_string(expected_dim));
    }

    using LossIdx = std::pair<double, std::int64_t>;
    std::vector<LossIdx> top;  // kept sorted ascending, size <= top_k
    const std::size_t k = static_cast<std::size_t>(config.top_k);
    std::vector<LossIdx> batch;
    for (std::int64_t lo = 0; lo < config.num_candidates; lo += config.batch_size) {
        const std::int64_t hi = std::min(config.num_candidates, lo + config.batch_size);
        batch.assign(static_cast<std::size_t>(hi - lo), {0.0, 0});
        parallel_for(static_cast<std::size_t>(hi - lo), config.threads, [&](std::size_t i) {
            const std::int64_t idx = lo + static_cast<std::int64_t>(i);
            const auto flat = candidate_flat(n_criteria, n_domains, config.seed, idx);
            batch[i] = {model.predict(flat), idx};
        });
        top.insert(top.end(), batch.begin(), batch.end());
        std::sort(top.begin(), top.end());  // (loss, index) lexicographic
        if (top.size() > k) top.resize(k);
    }

    SearchResult result;
    result.num_candidates = config.num_candidates;
    result.seed = config.seed;
    result.top.reserve(top.size());
    for (const auto& [loss, idx] : top) {
        result.top.push_back(RankedCandidate{idx, loss, candidate_flat(n_criteria, n_domains, config.seed, idx)});
    }

    // Componentwise mean in flat space: lambda averages geometrically, the
    // other coordinates arithmetically. Weight rows are renormalized after.
    const std::size_t dim = static_cast<std::size_t>(expected_dim);
    std::vector<double> mean(dim, 0.0);
    for (const auto& c : result.top) {
        for (std::size_t j = 0; j < dim; ++j) mean[j] += c.flat[j];
    }
    for (double& v : mean) v /= static_cast<double>(result.top.size());
    result.theta_star = unflatten(mean, n_criteria, n_domains);
    result.predicted_loss = model.predict(flatten(result.theta_star));
    return result;
}

}  // namespace quadmix
