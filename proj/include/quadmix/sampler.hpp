#pragma once

// Streams a corpus through the sampling function for one parameter setting:
// normalize -> merge -> rank -> expected count -> realized count. Decisions
// come out in corpus order and are bit-identical for any thread count.

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "quadmix/corpus.hpp"
#include "quadmix/errors.hpp"
#include "quadmix/parallel.hpp"
#include "quadmix/params.hpp"
#include "quadmix/quantile.hpp"
#include "quadmix/util.hpp"

namespace quadmix {

struct SampleDecision {
    std::string doc_id;
    double expected = 0.0;
    std::int64_t count = 0;
};

struct SampledDatasetStats {
    std::int64_t total_realized_tokens = 0;
    std::vector<std::int64_t> per_domain_realized_tokens;
    std::int64_t unique_docs = 0;
    std::int64_t unique_tokens = 0;
    double expected_token_total = 0.0;
    // Sum of frac*(1-frac)*token_count^2 over documents: the variance of the
    // realized token total around its expectation.
    double realization_variance = 0.0;
    // Token-weighted mean rank of the sampled multiset (repeats included).
    double mean_sampled_rank = 0.0;
    std::int64_t corpus_docs = 0;
    std::int64_t corpus_tokens = 0;

    nlohmann::json to_json() const {
        return nlohmann::json{{"total_realized_tokens", total_realized_tokens},
                              {"per_domain_realized_tokens", per_domain_realized_tokens},
                              {"unique_docs", unique_docs},
                              {"unique_tokens", unique_tokens},
                              {"expected_token_total", expected_token_total},
                              {"realization_variance", realization_variance},
                              {"mean_sampled_rank", mean_sampled_rank},
                              {"corpus_docs", corpus_docs},
                              {"corpus_tokens", corpus_tokens}};
    }

    static SampledDatasetStats from_json(const nlohmann::json& j) {
        SampledDatasetStats s;
        s.total_realized_tokens = j.at("total_realized_tokens").get<std::int64_t>();
        s.per_domain_realized_tokens = j.at("per_domain_realized_tokens").get<std::vector<std::int64_t>>();
        s.unique_docs = j.at("unique_docs").get<std::int64_t>();
        s.unique_tokens = j.at("unique_tokens").get<std::int64_t>();
        s.expected_token_total = j.at("expected_token_total").get<double>();
        s.realization_variance = j.at("realization_variance").get<double>();
        s.mean_sampled_rank = j.at("mean_sampled_rank").get<double>();
        s.corpus_docs = j.value("corpus_docs", std::int64_t{0});
        s.corpus_tokens = j.value("corpus_tokens", std::int64_t{0});
        return s;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write stats file: " + path);
        out << to_json().dump(2) << "\n";
    }
};

// Corpus pre-normalized once; the per-theta hot loop then only does a dot
// product, one table lookup, and one keyed draw per document.
struct NormalizedCorpus {
    std::vector<std::string> doc_ids;
    std::vector<std::uint64_t> id_hashes;
    std::vector<std::int64_t> token_counts;
    std::vector<int> domain_ids;
    std::vector<double> scores;  // row-major, n_docs x n_criteria
    int n_criteria = 0;
    int n_domains = 0;

    static NormalizedCorpus build(std::span<const DocumentRecord> corpus, const NormalizerSet& normalizers,
                                  int n_domains) {
        NormalizedCorpus out;
        out.n_criteria = static_cast<int>(normalizers.n_criteria());
        out.n_domains = n_domains;
        out.doc_ids.reserve(corpus.size());
        out.id_hashes.reserve(corpus.size());
        out.token_counts.reserve(corpus.size());
        out.domain_ids.reserve(corpus.size());
        out.scores.reserve(corpus.size() * normalizers.n_criteria());
        for (const auto& d : corpus) {
            if (d.domain_id < 0 || d.domain_id >= n_domains) {
                throw DataError("document " + d.doc_id + " has out-of-range domain_id");
            }
            out.doc_ids.push_back(d.doc_id);
            out.id_hashes.push_back(fnv1a64(d.doc_id));
            out.token_counts.push_back(d.token_count);
            out.domain_ids.push_back(d.domain_id);
            const auto norm = normalizers.normalize(d.scores);
            out.scores.insert(out.scores.end(), norm.begin(), norm.end());
        }
        return out;
    }

    std::size_t size() const { return doc_ids.size(); }

    std::span<const double> row(std::size_t i) const {
        return {scores.data() + i * static_cast<std::size_t>(n_criteria), static_cast<std::size_t>(n_criteria)};
    }
};

struct SampleResult {
    std::vector<SampleDecision> decisions;
    SampledDatasetStats stats;
};

namespace detail {

struct BlockStats {
    std::int64_t realized_tokens = 0;
    std::vector<std::int64_t> per_domain;
    std::int64_t unique_docs = 0;
    std::int64_t unique_tokens = 0;
    std::int64_t docs = 0;
    std::int64_t tokens = 0;
    std::int64_t rank_weight = 0;  // sum of count * token_count
    CompensatedSum expected;
    CompensatedSum variance;
    CompensatedSum rank_sum;  // sum of count * token_count * rank
};

// Shared per-document kernel; every sampling path funnels through here.
struct SampleKernel {
    const QuaDMixParams& theta;
    const RankTableSet& tables;
    std::uint64_t seed;

    void run(const NormalizedCorpus& corpus, std::size_t begin, std::size_t end,
             std::vector<SampleDecision>& decisions, BlockStats& bs) const {
        for (std::size_t i = begin; i < end; ++i) {
            const int d = corpus.domain_ids[i];
            const double q = merged_score(corpus.row(i), theta.alpha[static_cast<std::size_t>(d)]);
            const double r = tables.rank(d, q);
            const double s = sampling_value(r, theta.beta[static_cast<std::size_t>(d)]);
            const std::int64_t count = realize_count(s, seed, corpus.id_hashes[i]);
            const std::int64_t tok = corpus.token_counts[i];
            const double frac = s - std::floor(s);
            bs.docs += 1;
            bs.tokens += tok;
            bs.expected.add(s * static_cast<double>(tok));
            bs.variance.add(frac * (1.0 - frac) * static_cast<double>(tok) * static_cast<double>(tok));
            if (count > 0) {
                decisions.push_back(SampleDecision{corpus.doc_ids[i], s, count});
                bs.realized_tokens += count * tok;
                bs.per_domain[static_cast<std::size_t>(d)] += count * tok;
                bs.unique_docs += 1;
                bs.unique_tokens += tok;
                bs.rank_weight += count * tok;
                bs.rank_sum.add(static_cast<double>(count) * static_cast<double>(tok) * r);
            }
        }
    }
};

inline SampledDatasetStats merge_block_stats(std::vector<BlockStats>& blocks, int n_domains) {
    SampledDatasetStats s;
    s.per_domain_realized_tokens.assign(static_cast<std::size_t>(n_domains), 0);
    CompensatedSum expected, variance, rank_sum;
    std::int64_t rank_weight = 0;
    for (auto& b : blocks) {  // fixed block order: independent of thread count
        s.total_realized_tokens += b.realized_tokens;
        for (std::size_t m = 0; m < s.per_domain_realized_tokens.size(); ++m) {
            s.per_domain_realized_tokens[m] += b.per_domain[m];
        }
        s.unique_docs += b.unique_docs;
        s.unique_tokens += b.unique_tokens;
        s.corpus_docs += b.docs;
        s.corpus_tokens += b.tokens;
        expected.merge(b.expected);
        variance.merge(b.variance);
        rank_sum.merge(b.rank_sum);
        rank_weight += b.rank_weight;
    }
    s.expected_token_total = expected.value();
    s.realization_variance = variance.value();
    s.mean_sampled_rank = rank_weight > 0 ? rank_sum.value() / static_cast<double>(rank_weight) : 0.0;
    return s;
}

}  // namespace detail

// In-memory sampling pass. Requires tables built for exactly theta.alpha.
inline SampleResult sample_corpus(const NormalizedCorpus& corpus, const QuaDMixParams& theta,
                                  const RankTableSet& tables, std::uint64_t seed, int threads = 1) {
    theta.validate();
    if (theta.n_domains() != corpus.n_domains || theta.n_criteria() != corpus.n_criteria) {
        throw DataError("sample_corpus: parameter dimensions do not match corpus");
    }
    if (tables.alpha_fp() != alpha_fingerprint(theta.alpha)) {
        throw DataError("sample_corpus: rank tables were built for a different alpha");
    }
    const std::size_t n = corpus.size();
    const std::size_t nblocks = block_count(n);
    std::vector<std::vector<SampleDecision>> block_decisions(nblocks);
    std::vector<detail::BlockStats> block_stats(nblocks);
    for (auto& b : block_stats) b.per_domain.assign(static_cast<std::size_t>(corpus.n_domains), 0);
    const detail::SampleKernel kernel{theta, tables, seed};
    for_each_block(n, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
        kernel.run(corpus, begin, end, block_decisions[b], block_stats[b]);
    });
    SampleResult result;
    result.stats = detail::merge_block_stats(block_stats, corpus.n_domains);
    std::size_t total = 0;
    for (const auto& v : block_decisions) total += v.size();
    result.decisions.reserve(total);
    for (auto& v : block_decisions) {
        result.decisions.insert(result.decisions.end(), std::make_move_iterator(v.begin()),
                                std::make_move_iterator(v.end()));
    }
    return result;
}

// Convenience overload for raw records.
inline SampleResult sample_corpus(std::span<const DocumentRecord> corpus, const QuaDMixParams& theta,
                                  const NormalizerSet& normalizers, const RankTableSet& tables, std::uint64_t seed,
                                  int threads = 1) {
    const NormalizedCorpus nc = NormalizedCorpus::build(corpus, normalizers, theta.n_domains());
    return sample_corpus(nc, theta, tables, seed, threads);
}

inline std::string decision_line(const SampleDecision& d) {
    std::string out = "{\"doc_id\":";
    out += nlohmann::json(d.doc_id).dump();
    out += ",\"count\":";
    out += std::to_string(d.count);
    out += "}";
    return out;
}

inline void write_decisions(const std::string& path, std::span<const SampleDecision> decisions) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write decisions file: " + path);
    for (const auto& d : decisions) out << decision_line(d) << "\n";
}

inline std::vector<std::pair<std::string, std::int64_t>> read_decisions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open decisions file: " + path);
    std::vector<std::pair<std::string, std::int64_t>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": invalid decision line: " + e.what());
        }
        out.emplace_back(j.at("doc_id").get<std::string>(), j.at("count").get<std::int64_t>());
    }
    return out;
}

// Stable hash of the decision stream; identifies a sampled dataset.
inline std::uint64_t fingerprint_decisions(std::span<const SampleDecision> decisions) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& d : decisions) {
        h = fnv1a64_append(h, d.doc_id);
        h = fnv1a64_append(h, ":");
        h = fnv1a64_append(h, std::to_string(d.count));
        h = fnv1a64_append(h, "\n");
    }
    return h;
}

// Recomputes dataset statistics from a decision list and the corpus records.
// Rank-dependent fields are unavailable on this path and stay zero.
inline SampledDatasetStats dataset_stats(std::span<const std::pair<std::string, std::int64_t>> decisions,
                                         std::span<const DocumentRecord> corpus, int n_domains) {
    std::unordered_map<std::string_view, const DocumentRecord*> index;
    index.reserve(corpus.size());
    for (const auto& d : corpus) index.emplace(d.doc_id, &d);
    SampledDatasetStats s;
    s.per_domain_realized_tokens.assign(static_cast<std::size_t>(n_domains), 0);
    s.corpus_docs = static_cast<std::int64_t>(corpus.size());
    for (const auto& d : corpus) s.corpus_tokens += d.token_count;
    for (const auto& [id, count] : decisions) {
        const auto it = index.find(id);
        if (it == index.end()) throw DataError("dataset_stats: unknown doc_id \"" + std::string(id) + "\"");
        const DocumentRecord& rec = *it->second;
        if (count < 0) throw DataError("dataset_stats: negative count for \"" + std::string(id) + "\"");
        if (count == 0) continue;
        s.total_realized_tokens += count * rec.token_count;
        s.per_domain_realized_tokens[static_cast<std::size_t>(rec.domain_id)] += count * rec.token_count;
        s.unique_docs += 1;
        s.unique_tokens += rec.token_count;
    }
    return s;
}

// Streaming sharded pass with bounded memory: one reader, a worker pool, and
// an in-order committer. Output bytes match the in-memory path exactly.
inline SampledDatasetStats sample_corpus_stream(const std::vector<std::string>& shard_paths,
                                                const QuaDMixParams& theta, const NormalizerSet& normalizers,
                                                const RankTableSet& tables, std::uint64_t seed, int threads,
                                                std::ostream& decisions_out) {
    theta.validate();
    if (static_cast<std::size_t>(theta.n_criteria()) != normalizers.n_criteria()) {
        throw DataError("sample: parameter criteria count does not match normalizers");
    }
    if (tables.alpha_fp() != alpha_fingerprint(theta.alpha)) {
        throw DataError("sample: rank tables were built for a different alpha");
    }
    threads = resolve_threads(threads);
    const detail::SampleKernel kernel{theta, tables, seed};

    struct Block {
        std::size_t index;
        std::vector<DocumentRecord> records;
    };
    struct Done {
        std::vector<SampleDecision> decisions;
        detail::BlockStats stats;
    };

    std::mutex mu;
    std::condition_variable cv_space, cv_done;
    std::deque<Block> queue;
    std::map<std::size_t, Done> done;
    bool input_finished = false;
    std::exception_ptr worker_error;
    const std::size_t max_inflight = static_cast<std::size_t>(threads) * 2 + 2;

    auto worker = [&] {
        for (;;) {
            Block blk;
            {
                std::unique_lock<std::mutex> lock(mu);
                cv_space.wait(lock, [&] { return !queue.empty() || input_finished || worker_error; });
                if (worker_error) return;
                if (queue.empty()) return;  // finished
                blk = std::move(queue.front());
                queue.pop_front();
            }
            try {
                Done d;
                d.stats.per_domain.assign(static_cast<std::size_t>(theta.n_domains()), 0);
                const NormalizedCorpus nc = NormalizedCorpus::build(blk.records, normalizers, theta.n_domains());
                kernel.run(nc, 0, nc.size(), d.decisions, d.stats);
                std::lock_guard<std::mutex> lock(mu);
                done.emplace(blk.index, std::move(d));
                cv_done.notify_all();
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                worker_error = std::current_exception();
                cv_done.notify_all();
                cv_space.notify_all();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);

    std::vector<detail::BlockStats> ordered_stats;
    std::size_t next_commit = 0;
    std::size_t block_index = 0;
    // Commits the contiguous prefix of finished blocks; releases the lock
    // while writing so workers keep running.
    auto drain_ready = [&](std::unique_lock<std::mutex>& lock) {
        while (true) {
            const auto it = done.find(next_commit);
            if (it == done.end()) break;
            Done d = std::move(it->second);
            done.erase(it);
            lock.unlock();
            for (const auto& dec : d.decisions) decisions_out << decision_line(dec) << "\n";
            ordered_stats.push_back(std::move(d.stats));
            ++next_commit;
            lock.lock();
        }
    };

    try {
        std::vector<DocumentRecord> batch;
        batch.reserve(kBlockSize);
        auto flush_batch = [&] {
            if (batch.empty()) return;
            std::unique_lock<std::mutex> lock(mu);
            for (;;) {
                if (worker_error) std::rethrow_exception(worker_error);
                drain_ready(lock);
                if (block_index - next_commit < max_inflight) break;
                cv_done.wait(lock, [&] { return worker_error || done.count(next_commit) > 0; });
            }
            queue.push_back(Block{block_index++, std::move(batch)});
            batch = {};
            batch.reserve(kBlockSize);
            cv_space.notify_one();
        };
        for (const auto& path : shard_paths) {
            RecordReader reader(path);
            while (auto rec = reader.next()) {
                batch.push_back(std::move(*rec));
                if (batch.size() >= kBlockSize) flush_batch();
            }
        }
        flush_batch();
        {
            std::unique_lock<std::mutex> lock(mu);
            input_finished = true;
            cv_space.notify_all();
            while (next_commit < block_index) {
                if (worker_error) std::rethrow_exception(worker_error);
                drain_ready(lock);
                if (next_commit >= block_index) break;
                cv_done.wait(lock, [&] { return worker_error || done.count(next_commit) > 0; });
            }
            if (worker_error) std::rethrow_exception(worker_error);
        }
    } catch (...) {
        {
            std::lock_guard<std::mutex> lock(mu);
            input_finished = true;
            if (!worker_error) worker_error = std::current_exception();
            cv_space.notify_all();
        }
        for (auto& th : pool) th.join();
        std::rethrow_exception(worker_error);
    }
    for (auto& th : pool) th.join();
    if (worker_error) std::rethrow_exception(worker_error);
    return detail::merge_block_stats(ordered_stats, theta.n_domains());
}

}  // namespace quadmix
