#pragma once

// Score normalization and token-weighted quality-rank machinery. Percentiles
// are estimated once from a fixed random subset of the corpus instead of
// sorting the full corpus for every parameter setting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadmix/corpus.hpp"
#include "quadmix/errors.hpp"
#include "quadmix/params.hpp"
#include "quadmix/rng.hpp"
#include "quadmix/util.hpp"

namespace quadmix {

enum class Weighting { token_weighted, unweighted };

// Monotone piecewise-linear score -> percentile map. Lookups clamp to the
// first percentile below the range and to 1 above it; between breakpoints
// they interpolate linearly. An empty table answers 1.0 (floor-only
// sampling for unmeasured domains).
class QuantileTable {
public:
    QuantileTable() = default;

    static QuantileTable from_breakpoints(std::vector<double> scores, std::vector<double> pcts, Weighting w) {
        if (scores.size() != pcts.size()) throw DataError("quantile table: breakpoint arrays differ in length");
        for (std::size_t i = 0; i + 1 < scores.size(); ++i) {
            if (!(scores[i] < scores[i + 1])) throw DataError("quantile table: scores not strictly ascending");
            if (pcts[i] > pcts[i + 1]) throw DataError("quantile table: percentiles decrease");
        }
        if (!scores.empty()) {
            if (!(pcts.front() >= 0.0)) throw DataError("quantile table: first percentile < 0");
            if (pcts.back() != 1.0) throw DataError("quantile table: last percentile != 1");
        }
        QuantileTable t;
        t.scores_ = std::move(scores);
        t.pcts_ = std::move(pcts);
        t.weighting_ = w;
        return t;
    }

    bool empty() const { return scores_.empty(); }
    std::size_t size() const { return scores_.size(); }
    Weighting weighting() const { return weighting_; }

    double lookup(double s) const {
        if (scores_.empty()) return 1.0;
        if (s <= scores_.front()) return pcts_.front();
        if (s >= scores_.back()) return pcts_.back();
        const auto it = std::lower_bound(scores_.begin(), scores_.end(), s);
        const std::size_t hi = static_cast<std::size_t>(it - scores_.begin());
        if (scores_[hi] == s) return pcts_[hi];
        const std::size_t lo = hi - 1;
        const double t = (s - scores_[lo]) / (scores_[hi] - scores_[lo]);
        return pcts_[lo] + t * (pcts_[hi] - pcts_[lo]);
    }

    nlohmann::json to_json() const {
        nlohmann::json bp = nlohmann::json::array();
        for (std::size_t i = 0; i < scores_.size(); ++i) {
            bp.push_back(nlohmann::json::array({scores_[i], pcts_[i]}));
        }
        return nlohmann::json{{"breakpoints", bp},
                              {"weighting", weighting_ == Weighting::token_weighted ? "token_weighted" : "unweighted"}};
    }

    static QuantileTable from_json(const nlohmann::json& j) {
        std::vector<double> scores, pcts;
        for (const auto& bp : j.at("breakpoints")) {
            scores.push_back(bp.at(0).get<double>());
            pcts.push_back(bp.at(1).get<double>());
        }
        const Weighting w = j.value("weighting", "token_weighted") == std::string("unweighted")
                                ? Weighting::unweighted
                                : Weighting::token_weighted;
        return from_breakpoints(std::move(scores), std::move(pcts), w);
    }

private:
    std::vector<double> scores_;
    std::vector<double> pcts_;
    Weighting weighting_ = Weighting::token_weighted;
};

// Raw-score subset drawn uniformly (without replacement) from the corpus.
struct SubsetSample {
    std::vector<DocumentRecord> docs;  // sorted by doc_id for canonical output
    std::uint64_t seed = 0;
    std::size_t requested_size = 0;
};

namespace detail {

inline void finish_subset(SubsetSample& s) {
    std::sort(s.docs.begin(), s.docs.end(),
              [](const DocumentRecord& a, const DocumentRecord& b) { return a.doc_id < b.doc_id; });
}

}  // namespace detail

// Single-pass reservoir selection; deterministic for a fixed seed and input
// order.
inline SubsetSample draw_subset(std::span<const DocumentRecord> corpus, std::size_t size, std::uint64_t seed) {
    if (size < 1) throw DataError("draw_subset: size must be >= 1");
    if (corpus.empty()) throw DataError("draw_subset: empty corpus");
    SubsetSample s;
    s.seed = seed;
    s.requested_size = size;
    s.docs.reserve(std::min(size, corpus.size()));
    Rng rng(mix_seed(seed, "subset"));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (s.docs.size() < size) {
            s.docs.push_back(corpus[i]);
        } else {
            const std::uint64_t j = rng.next_below(i + 1);
            if (j < size) s.docs[static_cast<std::size_t>(j)] = corpus[i];
        }
    }
    detail::finish_subset(s);
    return s;
}

// Streaming variant for shard files; shards are visited in the given order.
inline SubsetSample draw_subset_stream(const std::vector<std::string>& shard_paths, std::size_t size,
                                       std::uint64_t seed) {
    if (size < 1) throw DataError("draw_subset: size must be >= 1");
    SubsetSample s;
    s.seed = seed;
    s.requested_size = size;
    Rng rng(mix_seed(seed, "subset"));
    std::size_t i = 0;
    for (const auto& path : shard_paths) {
        RecordReader reader(path);
        while (auto rec = reader.next()) {
            if (s.docs.size() < size) {
                s.docs.push_back(std::move(*rec));
            } else {
                const std::uint64_t j = rng.next_below(i + 1);
                if (j < size) s.docs[static_cast<std::size_t>(j)] = std::move(*rec);
            }
            ++i;
        }
    }
    if (s.docs.empty()) throw DataError("draw_subset: empty corpus");
    detail::finish_subset(s);
    return s;
}

// One global empirical CDF per criterion, built from the subset with
// <=-counting: sigma(q) = |{scores <= q}| / subset size. Order-preserving, so
// smaller raw score stays smaller after normalization.
class NormalizerSet {
public:
    static NormalizerSet build(const SubsetSample& subset) {
        if (subset.docs.empty()) throw DataError("build_normalizers: empty subset");
        const std::size_t n_criteria = subset.docs.front().scores.size();
        NormalizerSet set;
        set.tables_.reserve(n_criteria);
        const double denom = static_cast<double>(subset.docs.size());
        std::vector<double> values(subset.docs.size());
        for (std::size_t n = 0; n < n_criteria; ++n) {
            for (std::size_t i = 0; i < subset.docs.size(); ++i) {
                if (subset.docs[i].scores.size() != n_criteria) {
                    throw DataError("build_normalizers: ragged score vectors in subset");
                }
                values[i] = subset.docs[i].scores[n];
            }
            std::sort(values.begin(), values.end());
            std::vector<double> scores, pcts;
            std::size_t i = 0;
            while (i < values.size()) {
                std::size_t j = i;
                while (j < values.size() && values[j] == values[i]) ++j;
                scores.push_back(values[i]);
                pcts.push_back(static_cast<double>(j) / denom);
                i = j;
            }
            if (scores.size() == 1) {
                warn("normalizer for criterion " + std::to_string(n) +
                     " is degenerate (all scores identical); everything maps to 1.0");
            }
            set.tables_.push_back(QuantileTable::from_breakpoints(std::move(scores), std::move(pcts),
                                                                  Weighting::unweighted));
        }
        return set;
    }

    std::size_t n_criteria() const { return tables_.size(); }

    double normalize_one(std::size_t criterion, double raw) const { return tables_[criterion].lookup(raw); }

    std::vector<double> normalize(std::span<const double> raw) const {
        if (raw.size() != tables_.size()) throw DataError("normalize: score vector length mismatch");
        std::vector<double> out(raw.size());
        for (std::size_t n = 0; n < raw.size(); ++n) out[n] = tables_[n].lookup(raw[n]);
        return out;
    }

    const QuantileTable& table(std::size_t criterion) const { return tables_[criterion]; }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : tables_) arr.push_back(t.to_json());
        return arr;
    }

    static NormalizerSet from_json(const nlohmann::json& j) {
        NormalizerSet set;
        for (const auto& tj : j) set.tables_.push_back(QuantileTable::from_json(tj));
        if (set.tables_.empty()) throw DataError("normalizers: empty table list");
        return set;
    }

private:
    std::vector<QuantileTable> tables_;
};

// Subset with scores already normalized; the cached input that rank tables
// are rebuilt from for every parameter setting.
struct NormalizedSubset {
    std::vector<std::string> doc_ids;
    std::vector<std::int64_t> token_counts;
    std::vector<int> domain_ids;
    std::vector<double> scores;  // row-major, n_docs x n_criteria
    int n_criteria = 0;
    int n_domains = 0;
    std::vector<std::vector<std::size_t>> domain_rows;  // per-domain row indices in doc_id order

    static NormalizedSubset build(const SubsetSample& subset, const NormalizerSet& normalizers, int n_domains) {
        NormalizedSubset out;
        out.n_criteria = static_cast<int>(normalizers.n_criteria());
        out.n_domains = n_domains;
        out.domain_rows.resize(static_cast<std::size_t>(n_domains));
        const std::size_t k = subset.docs.size();
        out.doc_ids.reserve(k);
        out.token_counts.reserve(k);
        out.domain_ids.reserve(k);
        out.scores.reserve(k * normalizers.n_criteria());
        for (std::size_t i = 0; i < k; ++i) {
            const auto& d = subset.docs[i];
            if (d.domain_id < 0 || d.domain_id >= n_domains) {
                throw DataError("subset document " + d.doc_id + " has out-of-range domain_id");
            }
            out.doc_ids.push_back(d.doc_id);
            out.token_counts.push_back(d.token_count);
            out.domain_ids.push_back(d.domain_id);
            const auto norm = normalizers.normalize(d.scores);
            out.scores.insert(out.scores.end(), norm.begin(), norm.end());
            out.domain_rows[static_cast<std::size_t>(d.domain_id)].push_back(i);
        }
        return out;
    }

    std::span<const double> row(std::size_t i) const {
        return {scores.data() + i * static_cast<std::size_t>(n_criteria), static_cast<std::size_t>(n_criteria)};
    }
};

// Per-domain token-weighted rank tables for one alpha. rank(q) is the share
// of the domain's subset tokens whose merged score is <= q, so rank 0.05
// means 95% of that domain's tokens score worse.
class RankTableSet {
public:
    static RankTableSet build(const NormalizedSubset& subset, const std::vector<std::vector<double>>& alpha,
                              bool warn_empty = true) {
        if (static_cast<int>(alpha.size()) != subset.n_domains) {
            throw DataError("build_rank_tables: alpha has " + std::to_string(alpha.size()) + " rows, corpus has " +
                            std::to_string(subset.n_domains) + " domains");
        }
        RankTableSet set;
        set.alpha_fp_ = alpha_fingerprint(alpha);
        set.tables_.reserve(alpha.size());
        std::vector<std::pair<double, std::size_t>> members;  // (merged score, subset row)
        for (int m = 0; m < subset.n_domains; ++m) {
            const auto& rows = subset.domain_rows[static_cast<std::size_t>(m)];
            if (rows.empty()) {
                if (warn_empty) {
                    warn("domain " + std::to_string(m) +
                         " has no subset members; rank lookups there return 1.0 (floor-only sampling)");
                }
                set.tables_.emplace_back();
                continue;
            }
            members.clear();
            members.reserve(rows.size());
            std::int64_t domain_tokens = 0;
            for (std::size_t r : rows) {
                members.emplace_back(merged_score(subset.row(r), alpha[static_cast<std::size_t>(m)]), r);
                domain_tokens += subset.token_counts[r];
            }
            // rows are in doc_id order, so a stable sort breaks score ties by doc_id
            std::stable_sort(members.begin(), members.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            std::vector<double> scores, pcts;
            const double denom = static_cast<double>(domain_tokens);
            std::int64_t cum = 0;
            std::size_t i = 0;
            while (i < members.size()) {
                std::size_t j = i;
                while (j < members.size() && members[j].first == members[i].first) {
                    cum += subset.token_counts[members[j].second];
                    ++j;
                }
                scores.push_back(members[i].first);
                pcts.push_back(static_cast<double>(cum) / denom);
                i = j;
            }
            pcts.back() = 1.0;  // cum == domain_tokens; pin against rounding
            set.tables_.push_back(
                QuantileTable::from_breakpoints(std::move(scores), std::move(pcts), Weighting::token_weighted));
        }
        return set;
    }

    double rank(int domain, double merged) const {
        return tables_[static_cast<std::size_t>(domain)].lookup(merged);
    }

    bool domain_empty(int domain) const { return tables_[static_cast<std::size_t>(domain)].empty(); }
    int n_domains() const { return static_cast<int>(tables_.size()); }
    std::uint64_t alpha_fp() const { return alpha_fp_; }
    const QuantileTable& table(int domain) const { return tables_[static_cast<std::size_t>(domain)]; }

private:
    std::vector<QuantileTable> tables_;
    std::uint64_t alpha_fp_ = 0;
};

// Exact full-corpus evaluation of the token-weighted within-domain rank.
// Deliberately independent of QuantileTable: a test oracle for the subset
// approximation. Intended for harness-scale corpora that fit in memory.
inline double rank_exact(std::span<const DocumentRecord> corpus, const NormalizerSet& normalizers,
                         const std::vector<std::vector<double>>& alpha, int domain, double merged) {
    std::int64_t total = 0;
    std::int64_t leq = 0;
    for (const auto& d : corpus) {
        if (d.domain_id != domain) continue;
        total += d.token_count;
        const auto norm = normalizers.normalize(d.scores);
        const double q = merged_score(norm, alpha[static_cast<std::size_t>(domain)]);
        if (q <= merged) leq += d.token_count;
    }
    if (total == 0) throw DataError("rank_exact: domain " + std::to_string(domain) + " is empty");
    return static_cast<double>(leq) / static_cast<double>(total);
}

// Normalizers plus the cached normalized subset: everything downstream
// sampling needs, serialized as one bundle.
struct QuantileBundle {
    int n_criteria = 0;
    int n_domains = 0;
    std::uint64_t seed = 0;
    std::size_t subset_size = 0;
    NormalizerSet normalizers;
    NormalizedSubset subset;

    static QuantileBundle build(std::span<const DocumentRecord> corpus, const CorpusManifest& manifest,
                                std::size_t subset_size, std::uint64_t seed) {
        const SubsetSample sample = draw_subset(corpus, subset_size, seed);
        return from_sample(sample, manifest);
    }

    static QuantileBundle from_sample(const SubsetSample& sample, const CorpusManifest& manifest) {
        QuantileBundle b;
        b.n_criteria = manifest.n_criteria();
        b.n_domains = manifest.n_domains();
        b.seed = sample.seed;
        b.subset_size = sample.requested_size;
        for (const auto& d : sample.docs) {
            if (static_cast<int>(d.scores.size()) != b.n_criteria) {
                throw DataError("subset document " + d.doc_id + " has wrong score vector length");
            }
        }
        b.normalizers = NormalizerSet::build(sample);
        b.subset = NormalizedSubset::build(sample, b.normalizers, b.n_domains);
        return b;
    }

    nlohmann::json to_json() const {
        nlohmann::json sub;
        sub["doc_ids"] = subset.doc_ids;
        sub["token_counts"] = subset.token_counts;
        sub["domain_ids"] = subset.domain_ids;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < subset.doc_ids.size(); ++i) {
            const auto r = subset.row(i);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        sub["normalized_scores"] = rows;
        return nlohmann::json{{"n_criteria", n_criteria}, {"n_domains", n_domains},
                              {"seed", seed},             {"subset_size", subset_size},
                              {"normalizers", normalizers.to_json()}, {"subset", sub}};
    }

    static QuantileBundle from_json(const nlohmann::json& j) {
        QuantileBundle b;
        b.n_criteria = j.at("n_criteria").get<int>();
        b.n_domains = j.at("n_domains").get<int>();
        b.seed = j.at("seed").get<std::uint64_t>();
        b.subset_size = j.at("subset_size").get<std::size_t>();
        b.normalizers = NormalizerSet::from_json(j.at("normalizers"));
        const auto& sub = j.at("subset");
        b.subset.n_criteria = b.n_criteria;
        b.subset.n_domains = b.n_domains;
        b.subset.doc_ids = sub.at("doc_ids").get<std::vector<std::string>>();
        b.subset.token_counts = sub.at("token_counts").get<std::vector<std::int64_t>>();
        b.subset.domain_ids = sub.at("domain_ids").get<std::vector<int>>();
        b.subset.domain_rows.assign(static_cast<std::size_t>(b.n_domains), {});
        const auto& rows = sub.at("normalized_scores");
        if (rows.size() != b.subset.doc_ids.size() || b.subset.token_counts.size() != b.subset.doc_ids.size() ||
            b.subset.domain_ids.size() != b.subset.doc_ids.size()) {
            throw DataError("quantile bundle: inconsistent subset arrays");
        }
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto row = rows[i].get<std::vector<double>>();
            if (static_cast<int>(row.size()) != b.n_criteria) {
                throw DataError("quantile bundle: bad normalized score row length");
            }
            b.subset.scores.insert(b.subset.scores.end(), row.begin(), row.end());
            const int d = b.subset.domain_ids[i];
            if (d < 0 || d >= b.n_domains) throw DataError("quantile bundle: domain_id out of range");
            b.subset.domain_rows[static_cast<std::size_t>(d)].push_back(i);
        }
        return b;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write tables file: " + path);
        out << to_json().dump() << "\n";
    }

    static QuantileBundle load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open tables file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("tables parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

}  // namespace quadmix
