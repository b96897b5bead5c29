#pragma once

// Annotated-corpus data model and line-delimited on-disk format. Records hold
// quality scores and a domain label produced upstream; document text never
// enters the pipeline.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "quadmix/errors.hpp"
#include "quadmix/util.hpp"

namespace quadmix {

using json = nlohmann::json;

struct DocumentRecord {
    std::string doc_id;
    std::int64_t token_count = 0;
    int domain_id = 0;
    std::vector<double> scores;  // one per criterion, smaller = better
};

struct CorpusManifest {
    std::vector<std::string> criteria_names;
    std::vector<std::string> domain_names;
    // Totals are optional in the file; -1 means "not provided".
    std::int64_t doc_count = -1;
    std::int64_t token_count_total = -1;
    std::vector<std::int64_t> per_domain_token_counts;

    int n_criteria() const { return static_cast<int>(criteria_names.size()); }
    int n_domains() const { return static_cast<int>(domain_names.size()); }

    void validate() const {
        if (criteria_names.empty()) throw DataError("manifest: criteria_names must be non-empty");
        if (domain_names.empty()) throw DataError("manifest: domain_names must be non-empty");
        if (!per_domain_token_counts.empty()) {
            if (per_domain_token_counts.size() != domain_names.size()) {
                throw DataError("manifest: per_domain_token_counts length != number of domains");
            }
            std::int64_t sum = 0;
            for (std::int64_t t : per_domain_token_counts) {
                if (t < 0) throw DataError("manifest: negative per-domain token count");
                sum += t;
            }
            if (token_count_total >= 0 && sum != token_count_total) {
                throw DataError("manifest: per_domain_token_counts do not sum to token_count_total");
            }
        }
    }

    json to_json() const {
        json j;
        j["criteria_names"] = criteria_names;
        j["domain_names"] = domain_names;
        if (doc_count >= 0) j["doc_count"] = doc_count;
        if (token_count_total >= 0) j["token_count_total"] = token_count_total;
        if (!per_domain_token_counts.empty()) j["per_domain_token_counts"] = per_domain_token_counts;
        return j;
    }

    static CorpusManifest from_json(const json& j) {
        CorpusManifest m;
        m.criteria_names = j.at("criteria_names").get<std::vector<std::string>>();
        m.domain_names = j.at("domain_names").get<std::vector<std::string>>();
        if (j.contains("doc_count")) m.doc_count = j.at("doc_count").get<std::int64_t>();
        if (j.contains("token_count_total")) m.token_count_total = j.at("token_count_total").get<std::int64_t>();
        if (j.contains("per_domain_token_counts")) {
            m.per_domain_token_counts = j.at("per_domain_token_counts").get<std::vector<std::int64_t>>();
        }
        m.validate();
        return m;
    }

    static CorpusManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open manifest: " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw DataError("manifest parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write manifest: " + path);
        out << to_json().dump(2) << "\n";
    }
};

struct CriterionStats {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    double mean = 0.0;

    bool operator==(const CriterionStats&) const = default;
};

struct CorpusStats {
    std::int64_t doc_count = 0;
    std::int64_t token_total = 0;
    std::vector<std::int64_t> per_domain_docs;
    std::vector<std::int64_t> per_domain_tokens;
    std::vector<CriterionStats> per_criterion;

    bool operator==(const CorpusStats&) const = default;

    json to_json() const {
        json crit = json::array();
        for (const auto& c : per_criterion) {
            crit.push_back({{"min", c.min}, {"max", c.max}, {"mean", c.mean}});
        }
        return json{{"doc_count", doc_count},
                    {"token_total", token_total},
                    {"per_domain_docs", per_domain_docs},
                    {"per_domain_tokens", per_domain_tokens},
                    {"per_criterion", crit}};
    }
};

// Canonical record line; field order is part of the format.
inline std::string serialize_record(const DocumentRecord& d) {
    std::string out = "{\"doc_id\":";
    out += json(d.doc_id).dump();
    out += ",\"token_count\":";
    out += std::to_string(d.token_count);
    out += ",\"domain_id\":";
    out += std::to_string(d.domain_id);
    out += ",\"scores\":[";
    for (std::size_t i = 0; i < d.scores.size(); ++i) {
        if (i) out += ',';
        append_double(out, d.scores[i]);
    }
    out += "]}";
    return out;
}

inline DocumentRecord parse_record_line(std::string_view line, const std::string& context) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(context + ": invalid JSON: " + e.what());
    }
    DocumentRecord d;
    try {
        d.doc_id = j.at("doc_id").get<std::string>();
        d.token_count = j.at("token_count").get<std::int64_t>();
        d.domain_id = j.at("domain_id").get<int>();
        d.scores = j.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(context + ": bad record: " + e.what());
    }
    return d;
}

// Lazy single-pass reader over one shard; memory is bounded by one line.
class RecordReader {
public:
    explicit RecordReader(std::string path) : path_(std::move(path)), in_(path_) {
        if (!in_) throw DataError("cannot open corpus shard: " + path_);
    }

    std::optional<DocumentRecord> next() {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (line_.empty()) continue;
            return parse_record_line(line_, path_ + ":" + std::to_string(line_no_));
        }
        if (in_.bad()) throw DataError("I/O failure reading " + path_);
        return std::nullopt;
    }

    const std::string& path() const { return path_; }
    std::size_t line_no() const { return line_no_; }

private:
    std::string path_;
    std::ifstream in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

namespace detail {

class StatsAccumulator {
public:
    StatsAccumulator(int n_criteria, int n_domains)
        : n_criteria_(n_criteria),
          per_domain_docs_(static_cast<std::size_t>(n_domains), 0),
          per_domain_tokens_(static_cast<std::size_t>(n_domains), 0),
          crit_(static_cast<std::size_t>(n_criteria)),
          sums_(static_cast<std::size_t>(n_criteria)) {}

    void consume(const DocumentRecord& d, const std::string& context) {
        if (d.token_count < 1) throw DataError(context + ": token_count must be >= 1");
        if (d.domain_id < 0 || d.domain_id >= static_cast<int>(per_domain_docs_.size())) {
            throw DataError(context + ": domain_id " + std::to_string(d.domain_id) + " out of range");
        }
        if (static_cast<int>(d.scores.size()) != n_criteria_) {
            throw DataError(context + ": score vector length " + std::to_string(d.scores.size()) +
                            " != " + std::to_string(n_criteria_));
        }
        for (double s : d.scores) {
            if (!std::isfinite(s)) throw DataError(context + ": non-finite score");
        }
        if (!seen_ids_.insert(d.doc_id).second) {
            throw DataError(context + ": duplicate doc_id \"" + d.doc_id + "\"");
        }
        ++doc_count_;
        token_total_ += d.token_count;
        per_domain_docs_[static_cast<std::size_t>(d.domain_id)] += 1;
        per_domain_tokens_[static_cast<std::size_t>(d.domain_id)] += d.token_count;
        for (int n = 0; n < n_criteria_; ++n) {
            auto& c = crit_[static_cast<std::size_t>(n)];
            c.min = std::min(c.min, d.scores[static_cast<std::size_t>(n)]);
            c.max = std::max(c.max, d.scores[static_cast<std::size_t>(n)]);
            sums_[static_cast<std::size_t>(n)].add(d.scores[static_cast<std::size_t>(n)]);
        }
    }

    CorpusStats finish() const {
        CorpusStats s;
        s.doc_count = doc_count_;
        s.token_total = token_total_;
        s.per_domain_docs = per_domain_docs_;
        s.per_domain_tokens = per_domain_tokens_;
        s.per_criterion = crit_;
        for (std::size_t n = 0; n < crit_.size(); ++n) {
            if (doc_count_ > 0) {
                s.per_criterion[n].mean = sums_[n].value() / static_cast<double>(doc_count_);
            } else {
                s.per_criterion[n] = CriterionStats{};
            }
        }
        return s;
    }

private:
    int n_criteria_;
    std::int64_t doc_count_ = 0;
    std::int64_t token_total_ = 0;
    std::vector<std::int64_t> per_domain_docs_;
    std::vector<std::int64_t> per_domain_tokens_;
    std::vector<CriterionStats> crit_;
    std::vector<CompensatedSum> sums_;  // order-stable means via compensation
    std::unordered_set<std::string> seen_ids_;
};

}  // namespace detail

// Streams every shard once, enforcing record invariants and doc_id uniqueness
// across shards. Aggregates are order-insensitive.
inline CorpusStats validate_corpus(const std::vector<std::string>& shard_paths, const CorpusManifest& manifest) {
    manifest.validate();
    detail::StatsAccumulator acc(manifest.n_criteria(), manifest.n_domains());
    for (const auto& path : shard_paths) {
        RecordReader reader(path);
        while (auto rec = reader.next()) {
            acc.consume(*rec, reader.path() + ":" + std::to_string(reader.line_no()));
        }
    }
    CorpusStats stats = acc.finish();
    if (manifest.doc_count >= 0 && manifest.doc_count != stats.doc_count) {
        throw DataError("manifest doc_count " + std::to_string(manifest.doc_count) +
                        " != observed " + std::to_string(stats.doc_count));
    }
    if (manifest.token_count_total >= 0 && manifest.token_count_total != stats.token_total) {
        throw DataError("manifest token_count_total " + std::to_string(manifest.token_count_total) +
                        " != observed " + std::to_string(stats.token_total));
    }
    if (!manifest.per_domain_token_counts.empty() && manifest.per_domain_token_counts != stats.per_domain_tokens) {
        throw DataError("manifest per_domain_token_counts do not match observed totals");
    }
    return stats;
}

// In-memory load for pipeline stages that pass over the corpus many times.
inline std::vector<DocumentRecord> load_corpus(const std::vector<std::string>& shard_paths) {
    std::vector<DocumentRecord> docs;
    for (const auto& path : shard_paths) {
        RecordReader reader(path);
        while (auto rec = reader.next()) docs.push_back(std::move(*rec));
    }
    return docs;
}

inline void write_corpus(const std::string& path, std::span<const DocumentRecord> docs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write corpus: " + path);
    for (const auto& d : docs) out << serialize_record(d) << "\n";
}

}  // namespace quadmix
