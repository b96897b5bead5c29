#pragma once

// Proxy-experiment campaigns: draw a parameter set, sample the corpus with
// it, hand the sampled dataset to an evaluator, and append the outcome to an
// append-only ledger. Campaigns are resumable and deterministic because
// everything is keyed by experiment index, not completion order.

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "quadmix/corpus.hpp"
#include "quadmix/errors.hpp"
#include "quadmix/param_space.hpp"
#include "quadmix/params.hpp"
#include "quadmix/quantile.hpp"
#include "quadmix/rng.hpp"
#include "quadmix/sampler.hpp"
#include "quadmix/util.hpp"

namespace quadmix {

// Synthetic stand-in for proxy-model validation loss. Rewards sampled
// datasets whose domain token proportions match a hidden target and whose
// sampled tokens come from good ranks; depends on the parameters only through
// the sampled dataset, so the whole normalize/merge/rank/sample path is load
// bearing.
struct OracleConfig {
    std::vector<double> pi_star;  // hidden target domain proportions, simplex
    double gamma = 1.0;           // weight of the mean-rank quality term
    double tau = 0.0;             // noise scale
    std::uint64_t seed = 0;
    double empty_penalty = 100.0;

    void validate() const {
        if (pi_star.empty()) throw DataError("oracle: pi_star must be non-empty");
        double sum = 0.0;
        for (double p : pi_star) {
            if (!(p > 0.0)) throw DataError("oracle: pi_star entries must be > 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw DataError("oracle: pi_star must sum to 1");
        if (tau < 0.0) throw DataError("oracle: tau must be >= 0");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"pi_star", pi_star},
                              {"gamma", gamma},
                              {"tau", tau},
                              {"seed", seed},
                              {"empty_penalty", empty_penalty}};
    }

    static OracleConfig from_json(const nlohmann::json& j) {
        OracleConfig c;
        c.pi_star = j.at("pi_star").get<std::vector<double>>();
        c.gamma = j.value("gamma", 1.0);
        c.tau = j.value("tau", 0.0);
        c.seed = j.value("seed", std::uint64_t{0});
        c.empty_penalty = j.value("empty_penalty", 100.0);
        c.validate();
        return c;
    }

    static OracleConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open oracle config: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("oracle config parse failure in " + path + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write oracle config: " + path);
        out << to_json().dump(2) << "\n";
    }
};

// KL(realized domain proportions || pi_star) + gamma * mean sampled rank
// + tau * keyed Gaussian noise. Empty datasets get a flat penalty so the
// regressor learns to avoid degenerate configurations.
inline double synthetic_loss(const SampledDatasetStats& stats, double mean_sampled_rank, std::uint64_t fingerprint,
                             const OracleConfig& cfg) {
    cfg.validate();
    if (stats.per_domain_realized_tokens.size() != cfg.pi_star.size()) {
        throw DataError("synthetic_loss: domain count mismatch with pi_star");
    }
    if (stats.total_realized_tokens <= 0) return cfg.empty_penalty;
    double kl = 0.0;
    const double total = static_cast<double>(stats.total_realized_tokens);
    for (std::size_t m = 0; m < cfg.pi_star.size(); ++m) {
        const double p = static_cast<double>(stats.per_domain_realized_tokens[m]) / total;
        if (p > 0.0) kl += p * std::log(p / cfg.pi_star[m]);
    }
    double noise = 0.0;
    if (cfg.tau > 0.0) {
        Rng rng(splitmix64(splitmix64(cfg.seed) ^ fingerprint));
        noise = cfg.tau * rng.next_normal();
    }
    return kl + cfg.gamma * mean_sampled_rank + noise;
}

struct EvaluatorSpec {
    enum class Kind { external_command, synthetic_oracle };
    Kind kind = Kind::synthetic_oracle;
    std::string command_template;  // must contain {decisions}
    OracleConfig oracle;
    double timeout_s = 86400.0;

    void validate() const {
        if (kind == Kind::external_command) {
            if (command_template.find("{decisions}") == std::string::npos) {
                throw DataError("evaluator: command template must contain the {decisions} placeholder");
            }
            if (!(timeout_s > 0.0)) throw DataError("evaluator: timeout must be > 0");
        } else {
            oracle.validate();
        }
    }

    std::string tag() const { return kind == Kind::external_command ? "external" : "synthetic"; }
};

// Runs `/bin/sh -c cmd` with the placeholder substituted, captures stdout,
// and enforces a deadline; the whole process group is killed on timeout. The
// loss is the first parseable double on stdout, falling back to the file
// `<decisions>.loss`.
inline double run_external_evaluator(const std::string& command_template, const std::string& decisions_path,
                                     double timeout_s) {
    std::string cmd = command_template;
    for (std::size_t pos = cmd.find("{decisions}"); pos != std::string::npos; pos = cmd.find("{decisions}")) {
        cmd.replace(pos, 11, decisions_path);
    }
    int pipefd[2];
    if (pipe(pipefd) != 0) throw EvaluatorError("pipe() failed");
    const pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw EvaluatorError("fork() failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(pipefd[1], STDOUT_FILENO);
        close(pipefd[0]);
        close(pipefd[1]);
        execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(pipefd[1]);
    std::string output;
    char buf[4096];
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    bool timed_out = false;
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        const int remaining_ms =
            now >= deadline ? 0
                            : static_cast<int>(
                                  std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) +
                                  1;
        struct pollfd pfd {
            pipefd[0], POLLIN, 0
        };
        const int pr = poll(&pfd, 1, remaining_ms);
        if (pr > 0) {
            const ssize_t n = read(pipefd[0], buf, sizeof(buf));
            if (n > 0) {
                output.append(buf, static_cast<std::size_t>(n));
                continue;
            }
            break;  // EOF
        }
        if (pr == 0) {
            timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        if (errno == EINTR) continue;
        break;
    }
    close(pipefd[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (timed_out) {
        throw EvaluatorError("evaluator timed out after " + double_to_string(timeout_s) + "s");
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw EvaluatorError("evaluator exited abnormally (status " + std::to_string(status) + ")");
    }
    // first parseable double token on stdout
    std::size_t pos = 0;
    while (pos < output.size()) {
        while (pos < output.size() && std::isspace(static_cast<unsigned char>(output[pos]))) ++pos;
        std::size_t end = pos;
        while (end < output.size() && !std::isspace(static_cast<unsigned char>(output[end]))) ++end;
        if (end > pos) {
            try {
                std::size_t used = 0;
                const double v = std::stod(output.substr(pos, end - pos), &used);
                if (used == end - pos && std::isfinite(v)) return v;
            } catch (...) {
            }
        }
        pos = end;
    }
    const std::string loss_path = decisions_path + ".loss";
    std::ifstream in(loss_path);
    if (in) {
        double v = 0.0;
        if (in >> v && std::isfinite(v)) return v;
    }
    throw EvaluatorError("evaluator produced no parseable loss (stdout or " + loss_path + ")");
}

struct ExperimentRecord {
    std::string experiment_id;
    QuaDMixParams theta;
    std::vector<double> flat;
    std::string fingerprint;  // hex hash of the decision stream
    SampledDatasetStats stats;
    double loss = 0.0;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;
    std::string evaluator_tag;
    double wall_time_s = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"experiment_id", experiment_id}, {"theta", theta.to_json()},
                         {"flat", flat},                   {"fingerprint", fingerprint},
                         {"stats", stats.to_json()},       {"status", status},
                         {"evaluator", evaluator_tag},     {"wall_time_s", wall_time_s}};
        if (status == "ok") j["loss"] = loss;
        if (!error.empty()) j["error"] = error;
        return j;
    }

    static ExperimentRecord from_json(const nlohmann::json& j) {
        ExperimentRecord r;
        r.experiment_id = j.at("experiment_id").get<std::string>();
        r.theta = QuaDMixParams::from_json(j.at("theta"));
        r.flat = j.at("flat").get<std::vector<double>>();
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.stats = SampledDatasetStats::from_json(j.at("stats"));
        r.status = j.at("status").get<std::string>();
        if (j.contains("loss")) r.loss = j.at("loss").get<double>();
        if (j.contains("error")) r.error = j.at("error").get<std::string>();
        r.evaluator_tag = j.value("evaluator", "");
        r.wall_time_s = j.value("wall_time_s", 0.0);
        if (r.status == "ok" && !std::isfinite(r.loss)) throw DataError("ledger: non-finite loss in ok record");
        return r;
    }
};

// One record per line; a trailing checksum over the canonical serialization
// of everything else detects torn writes from interrupted campaigns.
inline std::string ledger_line(const ExperimentRecord& rec) {
    nlohmann::json j = rec.to_json();
    const std::string payload = j.dump();
    j["checksum"] = hex_u64(fnv1a64(payload));
    return j.dump();
}

inline ExperimentRecord parse_ledger_line(const std::string& line, const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(context + ": invalid ledger line: " + e.what());
    }
    if (!j.contains("checksum")) throw DataError(context + ": ledger line missing checksum");
    const std::string stored = j.at("checksum").get<std::string>();
    j.erase("checksum");
    const std::string payload = j.dump();
    if (hex_u64(fnv1a64(payload)) != stored) throw DataError(context + ": ledger checksum mismatch (torn write?)");
    return ExperimentRecord::from_json(j);
}

struct Ledger {
    std::vector<ExperimentRecord> records;
    // Byte offset where appends should start; shorter than the file size only
    // when the final line was torn.
    std::uint64_t append_offset = 0;

    static Ledger load(const std::string& path, bool tolerate_torn_tail = true) {
        Ledger ledger;
        std::ifstream in(path, std::ios::binary);
        if (!in) return ledger;
        std::string line;
        std::uint64_t offset = 0;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const bool has_newline = !in.eof();
            const std::uint64_t line_bytes = static_cast<std::uint64_t>(line.size()) + (has_newline ? 1 : 0);
            if (line.empty()) {
                offset += line_bytes;
                continue;
            }
            try {
                ledger.records.push_back(parse_ledger_line(line, path + ":" + std::to_string(line_no)));
            } catch (const DataError&) {
                const bool at_eof = in.peek() == std::ifstream::traits_type::eof();
                if (tolerate_torn_tail && at_eof) {
                    warn(path + ":" + std::to_string(line_no) + ": discarding torn final ledger line");
                    ledger.append_offset = offset;
                    return ledger;
                }
                throw;
            }
            offset += line_bytes;
        }
        ledger.append_offset = offset;
        return ledger;
    }
};

struct CampaignOptions {
    int count = 3000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string ledger_path;
    std::string scratch_dir;  // where decision files for external evaluators go
    EvaluatorSpec evaluator;
};

inline std::string experiment_id_for(int index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "exp_%06d", index);
    return std::string(buf);
}

inline std::uint64_t campaign_sample_seed(std::uint64_t seed, int index) {
    return mix_seed(mix_seed(seed, "sample"), static_cast<std::uint64_t>(index));
}

namespace detail {

inline ExperimentRecord run_one_experiment(int index, const NormalizedCorpus& corpus, const QuantileBundle& bundle,
                                           const CampaignOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentRecord rec;
    rec.experiment_id = experiment_id_for(index);
    rec.evaluator_tag = opts.evaluator.tag();
    Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(index)));
    rec.theta = draw_params(bundle.n_criteria, bundle.n_domains, rng).second;
    rec.flat = flatten(rec.theta);
    const RankTableSet tables = RankTableSet::build(bundle.subset, rec.theta.alpha, /*warn_empty=*/false);
    SampleResult sr = sample_corpus(corpus, rec.theta, tables, campaign_sample_seed(opts.seed, index), 1);
    rec.stats = sr.stats;
    rec.fingerprint = hex_u64(fingerprint_decisions(sr.decisions));
    try {
        if (opts.evaluator.kind == EvaluatorSpec::Kind::synthetic_oracle) {
            rec.loss = synthetic_loss(sr.stats, sr.stats.mean_sampled_rank,
                                      fnv1a64(rec.fingerprint), opts.evaluator.oracle);
        } else {
            const std::string dir = opts.scratch_dir.empty() ? "." : opts.scratch_dir;
            std::filesystem::create_directories(dir);
            const std::string dec_path = dir + "/" + rec.experiment_id + ".decisions.jsonl";
            write_decisions(dec_path, sr.decisions);
            rec.loss = run_external_evaluator(opts.evaluator.command_template, dec_path, opts.evaluator.timeout_s);
            if (!std::isfinite(rec.loss)) throw EvaluatorError("evaluator returned a non-finite loss");
        }
        rec.status = "ok";
    } catch (const EvaluatorError& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.loss = 0.0;
    }
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace detail

// Completed experiment ids are skipped on resume; their stored parameters are
// re-derived and compared so a ledger from a different seed is rejected
// instead of silently extended. Records are committed in index order through
// a single writer, so a ledger file is always a clean prefix of the full run.
inline Ledger run_campaign(const NormalizedCorpus& corpus, const QuantileBundle& bundle, CampaignOptions opts) {
    if (opts.count < 1) throw DataError("campaign: count must be >= 1");
    opts.evaluator.validate();
    if (opts.ledger_path.empty()) throw DataError("campaign: ledger path required");

    Ledger existing = Ledger::load(opts.ledger_path);
    std::map<int, const ExperimentRecord*> completed;
    for (const auto& rec : existing.records) {
        int idx = 0;
        if (std::sscanf(rec.experiment_id.c_str(), "exp_%d", &idx) != 1) {
            throw DataError("campaign: malformed experiment_id in ledger: " + rec.experiment_id);
        }
        if (!completed.emplace(idx, &rec).second) {
            throw DataError("campaign: duplicate experiment_id in ledger: " + rec.experiment_id);
        }
    }
    for (const auto& [idx, rec] : completed) {
        if (idx < 1 || idx > opts.count) continue;
        Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(idx)));
        const auto expected = flatten(draw_params(bundle.n_criteria, bundle.n_domains, rng).second);
        if (expected != rec->flat) {
            throw DataError("campaign: ledger record " + rec->experiment_id +
                            " does not match this seed/config; refusing to resume");
        }
    }

    // Truncate a torn tail before appending.
    if (std::filesystem::exists(opts.ledger_path) &&
        std::filesystem::file_size(opts.ledger_path) != existing.append_offset) {
        std::filesystem::resize_file(opts.ledger_path, existing.append_offset);
    }
    std::ofstream out(opts.ledger_path, std::ios::app | std::ios::binary);
    if (!out) throw DataError("cannot open ledger for append: " + opts.ledger_path);

    std::vector<int> todo;
    for (int i = 1; i <= opts.count; ++i) {
        if (!completed.count(i)) todo.push_back(i);
    }

    Ledger final_ledger;
    final_ledger.records.reserve(static_cast<std::size_t>(opts.count));
    std::map<int, ExperimentRecord> done;  // reorder buffer keyed by index
    std::mutex mu;
    std::condition_variable cv;
    std::size_t next_todo = 0;
    std::exception_ptr err;

    auto worker = [&] {
        for (;;) {
            int index = -1;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (err || next_todo >= todo.size()) return;
                index = todo[next_todo++];
            }
            try {
                ExperimentRecord rec = detail::run_one_experiment(index, corpus, bundle, opts);
                std::lock_guard<std::mutex> lock(mu);
                done.emplace(index, std::move(rec));
                cv.notify_all();
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                err = std::current_exception();
                cv.notify_all();
                return;
            }
        }
    };

    const int threads = std::clamp(resolve_threads(opts.threads), 1,
                                   std::max(1, static_cast<int>(todo.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);

    {
        std::unique_lock<std::mutex> lock(mu);
        for (int i = 1; i <= opts.count; ++i) {
            const auto it = completed.find(i);
            if (it != completed.end()) {
                final_ledger.records.push_back(*it->second);
                continue;
            }
            cv.wait(lock, [&] { return err || done.count(i) > 0; });
            if (err) break;
            ExperimentRecord rec = std::move(done.at(i));
            done.erase(i);
            lock.unlock();
            out << ledger_line(rec) << "\n";
            out.flush();
            lock.lock();
            final_ledger.records.push_back(std::move(rec));
        }
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return final_ledger;
}

// Seeded shuffle of the successful records, then a disjoint train/val split.
struct LedgerSplit {
    std::vector<double> train_features, val_features;
    std::vector<double> train_targets, val_targets;
    std::size_t n_features = 0;
    std::vector<std::string> train_ids, val_ids;
};

inline LedgerSplit split_ledger(const Ledger& ledger, std::size_t train_count, std::size_t val_count,
                                std::uint64_t seed) {
    std::vector<const ExperimentRecord*> ok;
    for (const auto& r : ledger.records) {
        if (r.status == "ok") ok.push_back(&r);
    }
    if (train_count + val_count > ok.size()) {
        throw DataError("split_ledger: need " + std::to_string(train_count + val_count) + " successful records, have " +
                        std::to_string(ok.size()));
    }
    if (train_count == 0 || val_count == 0) throw DataError("split_ledger: empty split requested");
    Rng rng(mix_seed(seed, "split"));
    rng.shuffle(std::span<const ExperimentRecord*>(ok));
    LedgerSplit split;
    split.n_features = ok.front()->flat.size();
    auto push = [&](const ExperimentRecord* r, std::vector<double>& X, std::vector<double>& y,
                    std::vector<std::string>& ids) {
        if (r->flat.size() != split.n_features) throw DataError("split_ledger: inconsistent feature lengths");
        X.insert(X.end(), r->flat.begin(), r->flat.end());
        y.push_back(r->loss);
        ids.push_back(r->experiment_id);
    };
    for (std::size_t i = 0; i < train_count; ++i) {
        push(ok[i], split.train_features, split.train_targets, split.train_ids);
    }
    for (std::size_t i = 0; i < val_count; ++i) {
        push(ok[train_count + i], split.val_features, split.val_targets, split.val_ids);
    }
    return split;
}

}  // namespace quadmix
