#pragma once

// Sampling configuration: per-domain merge weights over quality criteria plus
// the four sampling-curve parameters, and the pure per-document math that
// consumes them.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmix/errors.hpp"
#include "quadmix/rng.hpp"

namespace quadmix {

struct BetaParams {
    double lambda = 1.0;    // decay speed, [1, 1000]
    double omega = 0.0;     // rank threshold, [0, 0.1]
    double eta = 0.0;       // output scale exponent, [0, 1]
    double epsilon = 0.0;   // sampling floor, [0, 0.001]
};

struct QuaDMixParams {
    std::vector<std::vector<double>> alpha;  // M rows of N weights, each row sums to 1
    std::vector<BetaParams> beta;            // M entries

    int n_domains() const { return static_cast<int>(alpha.size()); }
    int n_criteria() const { return alpha.empty() ? 0 : static_cast<int>(alpha.front().size()); }
    int flat_size() const { return (n_criteria() + 4) * n_domains(); }

    void validate() const {
        if (alpha.empty() || beta.size() != alpha.size()) {
            throw DataError("params: alpha and beta must have one entry per domain");
        }
        const std::size_t n = alpha.front().size();
        if (n == 0) throw DataError("params: zero criteria");
        for (std::size_t m = 0; m < alpha.size(); ++m) {
            if (alpha[m].size() != n) throw DataError("params: ragged alpha matrix");
            double sum = 0.0;
            for (double a : alpha[m]) {
                if (!(a >= 0.0) || !std::isfinite(a)) {
                    throw DataError("params: alpha entries must be finite and >= 0");
                }
                sum += a;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw DataError("params: alpha row " + std::to_string(m) + " sums to " +
                                std::to_string(sum) + ", expected 1");
            }
            const BetaParams& b = beta[m];
            if (!(b.lambda >= 1.0 && b.lambda <= 1000.0)) throw DataError("params: lambda out of [1, 1000]");
            if (!(b.omega >= 0.0 && b.omega <= 0.1)) throw DataError("params: omega out of [0, 0.1]");
            if (!(b.eta >= 0.0 && b.eta <= 1.0)) throw DataError("params: eta out of [0, 1]");
            if (!(b.epsilon >= 0.0 && b.epsilon <= 0.001)) throw DataError("params: epsilon out of [0, 0.001]");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json betas = nlohmann::json::array();
        for (const auto& b : beta) {
            betas.push_back({{"lambda", b.lambda}, {"omega", b.omega}, {"eta", b.eta}, {"epsilon", b.epsilon}});
        }
        return nlohmann::json{{"n_criteria", n_criteria()},
                              {"n_domains", n_domains()},
                              {"alpha", alpha},
                              {"beta", betas}};
    }

    static QuaDMixParams from_json(const nlohmann::json& j) {
        QuaDMixParams p;
        p.alpha = j.at("alpha").get<std::vector<std::vector<double>>>();
        for (const auto& jb : j.at("beta")) {
            BetaParams b;
            b.lambda = jb.at("lambda").get<double>();
            b.omega = jb.at("omega").get<double>();
            b.eta = jb.at("eta").get<double>();
            b.epsilon = jb.at("epsilon").get<double>();
            p.beta.push_back(b);
        }
        if (j.contains("n_criteria") && j.at("n_criteria").get<int>() != p.n_criteria()) {
            throw DataError("params: n_criteria does not match alpha row length");
        }
        if (j.contains("n_domains") && j.at("n_domains").get<int>() != p.n_domains()) {
            throw DataError("params: n_domains does not match alpha row count");
        }
        p.validate();
        return p;
    }

    static QuaDMixParams load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open params file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("params parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write params file: " + path);
        out << to_json().dump(2) << "\n";
    }
};

// Convex combination of normalized criterion scores with one domain's weights.
inline double merged_score(std::span<const double> normalized_scores, std::span<const double> alpha_row) {
    if (normalized_scores.size() != alpha_row.size()) {
        throw DataError("merged_score: score/weight length mismatch");
    }
    double q = 0.0;
    for (std::size_t n = 0; n < alpha_row.size(); ++n) q += normalized_scores[n] * alpha_row[n];
    return q;
}

// Expected sample count for a quality rank. Truncated exponentiated sigmoid:
// below the threshold the value decays from ~2^eta down to 1 as rank
// approaches omega; above the threshold only the floor epsilon remains. The
// boundary rank == omega belongs to the high branch.
inline double sampling_value(double rank, const BetaParams& b) noexcept {
    if (rank > b.omega) return b.epsilon;
    const double base = 2.0 / (1.0 + std::exp(-b.lambda * (b.omega - rank)));
    return std::pow(base, b.eta) + b.epsilon;
}

// floor(expected) guaranteed copies plus one Bernoulli(frac(expected)) extra,
// keyed by (seed, doc) so realization is independent of traversal order.
inline std::int64_t realize_count(double expected, std::uint64_t seed, std::uint64_t doc_key_hash) noexcept {
    const double fl = std::floor(expected);
    const double frac = expected - fl;
    std::int64_t count = static_cast<std::int64_t>(fl);
    if (frac > 0.0 && keyed_uniform(seed, doc_key_hash) < frac) ++count;
    return count;
}

inline std::int64_t realize_count(double expected, std::uint64_t seed, std::string_view doc_id) noexcept {
    return realize_count(expected, seed, fnv1a64(doc_id));
}

// Hash of the weight matrix bit patterns; ties a rank-table set to the alpha
// it was built with.
inline std::uint64_t alpha_fingerprint(const std::vector<std::vector<double>>& alpha) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& row : alpha) {
        for (double a : row) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(a));
            std::memcpy(&bits, &a, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

}  // namespace quadmix
