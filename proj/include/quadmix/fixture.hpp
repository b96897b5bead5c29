#pragma once

// Synthetic annotated-corpus generator for tests and demos. Documents carry a
// latent quality in [0,1]; each criterion observes it through its own noise,
// scale, and per-domain bias, and one criterion additionally prefers long
// documents so that merge weights interact with token-weighted ranks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "quadmix/corpus.hpp"
#include "quadmix/errors.hpp"
#include "quadmix/rng.hpp"

namespace quadmix {

struct FixtureConfig {
    std::int64_t docs = 50000;
    int n_criteria = 3;
    int n_domains = 8;
    std::uint64_t seed = 1;
    double token_sigma = 0.6;          // lognormal token-count spread
    double token_mu = std::log(400.0);
    double domain_skew = 0.8;          // domain shares ~ 1/(k+1)^skew
    std::int64_t min_tokens = 16;
    std::int64_t max_tokens = 20000;

    void validate() const {
        if (docs < 1) throw DataError("fixture: docs must be >= 1");
        if (n_criteria < 1 || n_domains < 1) throw DataError("fixture: need >= 1 criterion and domain");
        if (token_sigma < 0.0) throw DataError("fixture: token_sigma must be >= 0");
        if (min_tokens < 1 || max_tokens < min_tokens) throw DataError("fixture: bad token bounds");
    }
};

struct Fixture {
    std::vector<DocumentRecord> docs;
    CorpusManifest manifest;
};

inline Fixture generate_fixture(const FixtureConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, "fixture"));

    std::vector<double> shares(static_cast<std::size_t>(cfg.n_domains));
    double share_sum = 0.0;
    for (int m = 0; m < cfg.n_domains; ++m) {
        shares[static_cast<std::size_t>(m)] = std::pow(static_cast<double>(m + 1), -cfg.domain_skew);
        share_sum += shares[static_cast<std::size_t>(m)];
    }
    std::vector<double> cum(shares.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < shares.size(); ++m) {
        acc += shares[m] / share_sum;
        cum[m] = acc;
    }
    cum.back() = 1.0;

    // Per-(criterion, domain) bias: criteria disagree across domains.
    std::vector<std::vector<double>> shift(static_cast<std::size_t>(cfg.n_criteria));
    for (auto& row : shift) {
        row.resize(static_cast<std::size_t>(cfg.n_domains));
        for (auto& v : row) v = 0.25 * rng.next_double();
    }

    const int id_width = static_cast<int>(std::to_string(cfg.docs - 1).size());
    Fixture fx;
    fx.docs.reserve(static_cast<std::size_t>(cfg.docs));
    for (std::int64_t i = 0; i < cfg.docs; ++i) {
        DocumentRecord d;
        {
            std::string num = std::to_string(i);
            d.doc_id = "doc_" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num;
        }
        const double u_dom = rng.next_double();
        d.domain_id = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u_dom) - cum.begin());
        const double z = rng.next_normal();
        const double raw_tokens = std::exp(cfg.token_mu + cfg.token_sigma * z);
        d.token_count = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(raw_tokens)),
                                                 cfg.min_tokens, cfg.max_tokens);
        const double quality = rng.next_double();  // smaller = better
        const double length_pref = 1.0 / (1.0 + std::exp(z));  // long docs -> small
        d.scores.resize(static_cast<std::size_t>(cfg.n_criteria));
        for (int n = 0; n < cfg.n_criteria; ++n) {
            const double noise = rng.next_double();
            const double bias = shift[static_cast<std::size_t>(n)][static_cast<std::size_t>(d.domain_id)];
            double s;
            switch (n % 3) {
                case 0:
                    s = 0.7 * quality + 0.3 * noise + bias;
                    break;
                case 1:
                    s = (0.5 * quality + 0.5 * noise + bias) * 40.0 + 15.0;
                    break;
                default:
                    s = std::exp(2.0 * (0.55 * quality + 0.25 * noise + 0.2 * length_pref + bias));
                    break;
            }
            d.scores[static_cast<std::size_t>(n)] = s;
        }
        fx.docs.push_back(std::move(d));
    }

    fx.manifest.criteria_names.reserve(static_cast<std::size_t>(cfg.n_criteria));
    for (int n = 0; n < cfg.n_criteria; ++n) {
        fx.manifest.criteria_names.push_back("quality_" + std::string(1, static_cast<char>('a' + n % 26)) +
                                             (n >= 26 ? std::to_string(n / 26) : ""));
    }
    for (int m = 0; m < cfg.n_domains; ++m) {
        fx.manifest.domain_names.push_back("domain_" + std::to_string(m));
    }
    fx.manifest.doc_count = cfg.docs;
    fx.manifest.per_domain_token_counts.assign(static_cast<std::size_t>(cfg.n_domains), 0);
    std::int64_t total = 0;
    for (const auto& d : fx.docs) {
        total += d.token_count;
        fx.manifest.per_domain_token_counts[static_cast<std::size_t>(d.domain_id)] += d.token_count;
    }
    fx.manifest.token_count_total = total;
    fx.manifest.validate();
    return fx;
}

inline Fixture write_fixture(const FixtureConfig& cfg, const std::string& corpus_path,
                             const std::string& manifest_path) {
    Fixture fx = generate_fixture(cfg);
    write_corpus(corpus_path, fx.docs);
    fx.manifest.save(manifest_path);
    return fx;
}

}  // namespace quadmix
