// Command-line front end for the corpus data-selection pipeline. One
// subcommand per stage plus run-all to chain them; every command prints a
// single-line JSON run summary on stdout (seeds, input hashes, outputs) and
// keeps human-readable progress on stderr.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 evaluator failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <glob.h>

#include <CLI11.hpp>

#include "quadmix/quadmix.hpp"

namespace fs = std::filesystem;
using namespace quadmix;

namespace {

struct Summary {
    nlohmann::json j;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    explicit Summary(const std::string& command) {
        j["command"] = command;
        j["inputs"] = nlohmann::json::object();
        j["outputs"] = nlohmann::json::array();
    }

    void input(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) return;
        std::uint64_t h = 0xcbf29ce484222325ULL;
        char buf[1 << 16];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
            h = fnv1a64_append(h, std::string_view(buf, static_cast<std::size_t>(in.gcount())));
            if (in.eof()) break;
        }
        j["inputs"][path] = hex_u64(h);
    }

    void inputs(const std::vector<std::string>& paths) {
        for (const auto& p : paths) input(p);
    }

    void output(const std::string& path) { j["outputs"].push_back(path); }

    void emit() {
        j["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << j.dump() << std::endl;
    }
};

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
    std::vector<std::string> paths;
    for (const auto& pattern : patterns) {
        glob_t g{};
        const int rc = glob(pattern.c_str(), GLOB_ERR, nullptr, &g);
        if (rc == GLOB_NOMATCH) {
            globfree(&g);
            throw DataError("corpus glob matched nothing: " + pattern);
        }
        if (rc != 0) {
            globfree(&g);
            throw DataError("corpus glob failed: " + pattern);
        }
        for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
        globfree(&g);
    }
    if (paths.empty()) throw DataError("no corpus shards given");
    return paths;
}

int default_threads() {
    if (const char* env = std::getenv("QUADMIX_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return resolve_threads(0);
}

std::pair<std::size_t, std::size_t> parse_split(const std::string& split) {
    const auto colon = split.find(':');
    if (colon == std::string::npos) throw DataError("--split must look like TRAIN:VAL, e.g. 2800:200");
    try {
        const long train = std::stol(split.substr(0, colon));
        const long val = std::stol(split.substr(colon + 1));
        if (train < 1 || val < 1) throw DataError("--split counts must be positive");
        return {static_cast<std::size_t>(train), static_cast<std::size_t>(val)};
    } catch (const std::exception&) {
        throw DataError("cannot parse --split value: " + split);
    }
}

EvaluatorSpec make_evaluator(const std::string& evaluator_cmd, const std::string& evaluator_kind,
                             const std::string& oracle_path, double timeout_s, int n_domains) {
    EvaluatorSpec spec;
    if (!evaluator_cmd.empty()) {
        spec.kind = EvaluatorSpec::Kind::external_command;
        spec.command_template = evaluator_cmd;
        spec.timeout_s = timeout_s;
    } else if (evaluator_kind == "synthetic") {
        spec.kind = EvaluatorSpec::Kind::synthetic_oracle;
        if (!oracle_path.empty()) {
            spec.oracle = OracleConfig::load(oracle_path);
        } else {
            spec.oracle.pi_star.assign(static_cast<std::size_t>(n_domains), 1.0 / n_domains);
        }
    } else {
        throw DataError("choose an evaluator: --evaluator-cmd \"cmd {decisions}\" or --evaluator synthetic");
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------- validate
struct ValidateArgs {
    std::vector<std::string> corpus;
    std::string manifest;
};

int cmd_validate(const ValidateArgs& a) {
    Summary summary("validate");
    const auto shards = expand_globs(a.corpus);
    summary.inputs(shards);
    summary.input(a.manifest);
    const CorpusManifest manifest = CorpusManifest::load(a.manifest);
    const CorpusStats stats = validate_corpus(shards, manifest);
    std::cerr << "validated " << stats.doc_count << " documents, " << stats.token_total << " tokens across "
              << shards.size() << " shard(s)\n";
    summary.j["stats"] = stats.to_json();
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- quantiles
struct QuantilesArgs {
    std::vector<std::string> corpus;
    std::string manifest;
    std::size_t subset_size = 10000;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_quantiles(const QuantilesArgs& a) {
    Summary summary("quantiles");
    const auto shards = expand_globs(a.corpus);
    summary.inputs(shards);
    summary.input(a.manifest);
    summary.j["seed"] = a.seed;
    summary.j["subset_size"] = a.subset_size;
    const CorpusManifest manifest = CorpusManifest::load(a.manifest);
    const SubsetSample sample = draw_subset_stream(shards, a.subset_size, a.seed);
    const QuantileBundle bundle = QuantileBundle::from_sample(sample, manifest);
    bundle.save(a.out);
    std::cerr << "subset of " << bundle.subset.doc_ids.size() << " documents -> " << a.out << "\n";
    summary.output(a.out);
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- gen-params
struct GenParamsArgs {
    int n_criteria = 0;
    int n_domains = 0;
    int count = 1;
    std::uint64_t seed = 0;
    std::string out_dir;
};

int cmd_gen_params(const GenParamsArgs& a) {
    Summary summary("gen-params");
    summary.j["seed"] = a.seed;
    if (a.count < 1) throw DataError("--count must be >= 1");
    fs::create_directories(a.out_dir);
    for (int i = 0; i < a.count; ++i) {
        Rng rng(mix_seed(a.seed, static_cast<std::uint64_t>(i)));
        const auto [draw, params] = draw_params(a.n_criteria, a.n_domains, rng);
        const std::string path = a.out_dir + "/theta_" + std::to_string(i) + ".json";
        params.save(path);
    }
    summary.j["count"] = a.count;
    summary.output(a.out_dir);
    summary.emit();
    std::cerr << "wrote " << a.count << " parameter files to " << a.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------- sample
struct SampleArgs {
    std::vector<std::string> corpus;
    std::string theta;
    std::string tables;
    std::uint64_t seed = 0;
    std::string out;
    std::string stats;
    int threads = default_threads();
};

int cmd_sample(const SampleArgs& a) {
    Summary summary("sample");
    const auto shards = expand_globs(a.corpus);
    summary.inputs(shards);
    summary.input(a.theta);
    summary.input(a.tables);
    summary.j["seed"] = a.seed;
    summary.j["threads"] = a.threads;
    const QuaDMixParams theta = QuaDMixParams::load(a.theta);
    const QuantileBundle bundle = QuantileBundle::load(a.tables);
    if (theta.n_criteria() != bundle.n_criteria || theta.n_domains() != bundle.n_domains) {
        throw DataError("theta is " + std::to_string(theta.n_criteria()) + "x" + std::to_string(theta.n_domains()) +
                        " but tables are " + std::to_string(bundle.n_criteria) + "x" +
                        std::to_string(bundle.n_domains));
    }
    const RankTableSet tables = RankTableSet::build(bundle.subset, theta.alpha);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw DataError("cannot write decisions file: " + a.out);
    const SampledDatasetStats stats =
        sample_corpus_stream(shards, theta, bundle.normalizers, tables, a.seed, a.threads, out);
    out.close();
    stats.save(a.stats);
    std::cerr << "selected " << stats.unique_docs << " documents (" << stats.total_realized_tokens
              << " realized tokens) -> " << a.out << "\n";
    summary.output(a.out);
    summary.output(a.stats);
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- campaign
struct CampaignArgs {
    std::vector<std::string> corpus;
    std::string manifest;
    int count = 3000;
    std::size_t subset_size = 10000;
    std::uint64_t seed = 0;
    std::string ledger;
    std::string evaluator_cmd;
    std::string evaluator_kind;
    std::string oracle;
    double timeout_s = 86400.0;
    int threads = default_threads();
    std::string tables_out;
};

int cmd_campaign(const CampaignArgs& a) {
    Summary summary("campaign");
    const auto shards = expand_globs(a.corpus);
    summary.inputs(shards);
    summary.input(a.manifest);
    summary.j["seed"] = a.seed;
    summary.j["count"] = a.count;
    const CorpusManifest manifest = CorpusManifest::load(a.manifest);
    const EvaluatorSpec evaluator =
        make_evaluator(a.evaluator_cmd, a.evaluator_kind, a.oracle, a.timeout_s, manifest.n_domains());
    if (!a.oracle.empty()) summary.input(a.oracle);

    std::cerr << "loading corpus...\n";
    const std::vector<DocumentRecord> docs = load_corpus(shards);
    const QuantileBundle bundle = QuantileBundle::build(docs, manifest, a.subset_size, a.seed);
    if (!a.tables_out.empty()) {
        bundle.save(a.tables_out);
        summary.output(a.tables_out);
    }
    const NormalizedCorpus corpus = NormalizedCorpus::build(docs, bundle.normalizers, manifest.n_domains());

    CampaignOptions opts;
    opts.count = a.count;
    opts.seed = a.seed;
    opts.threads = a.threads;
    opts.ledger_path = a.ledger;
    opts.scratch_dir = fs::path(a.ledger).parent_path().string();
    opts.evaluator = evaluator;
    const Ledger ledger = run_campaign(corpus, bundle, opts);

    std::size_t ok = 0;
    for (const auto& r : ledger.records) ok += r.status == "ok";
    std::cerr << "campaign complete: " << ok << "/" << ledger.records.size() << " experiments succeeded\n";
    summary.j["succeeded"] = ok;
    summary.j["failed"] = ledger.records.size() - ok;
    summary.output(a.ledger);
    summary.emit();
    if (ok == 0) throw EvaluatorError("campaign finished with zero successful experiments");
    return 0;
}

// ---------------------------------------------------------------- fit
struct FitArgs {
    std::string ledger;
    std::string split = "2800:200";
    std::string config;
    std::uint64_t seed = 0;  // split shuffle seed
    std::string out;
    std::string report;
};

int cmd_fit(const FitArgs& a) {
    Summary summary("fit");
    summary.input(a.ledger);
    summary.j["seed"] = a.seed;
    const auto [train_count, val_count] = parse_split(a.split);
    TrainConfig config;
    if (!a.config.empty()) {
        config = TrainConfig::load(a.config);
        summary.input(a.config);
    }
    const Ledger ledger = Ledger::load(a.ledger);
    if (ledger.records.empty()) throw DataError("ledger is empty or missing: " + a.ledger);
    const LedgerSplit split = split_ledger(ledger, train_count, val_count, a.seed);
    std::cerr << "fitting on " << train_count << " experiments, validating on " << val_count << "\n";
    const GBDTModel model = fit(split.train_features, split.n_features, split.train_targets, config);
    const EvalReport report = evaluate_mae(model, split.val_features, split.n_features, split.val_targets);
    model.save(a.out);
    report.save(a.report);
    std::cerr << "validation MAE " << report.mae << " -> " << a.out << "\n";
    summary.j["mae"] = report.mae;
    summary.output(a.out);
    summary.output(a.report);
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- search
struct SearchArgs {
    std::string model;
    int n_criteria = 0;
    int n_domains = 0;
    std::int64_t candidates = 100000;
    int top_k = 10;
    std::uint64_t seed = 0;
    std::string out;
    std::string report;
    int threads = default_threads();
};

int cmd_search(const SearchArgs& a) {
    Summary summary("search");
    summary.input(a.model);
    summary.j["seed"] = a.seed;
    const GBDTModel model = GBDTModel::load(a.model);
    SearchConfig cfg;
    cfg.num_candidates = a.candidates;
    cfg.top_k = a.top_k;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    const SearchResult result = search(model, a.n_criteria, a.n_domains, cfg);
    result.theta_star.save(a.out);
    if (!a.report.empty()) {
        result.save_report(a.report);
        summary.output(a.report);
    }
    std::cerr << "predicted loss of selected parameters: " << result.predicted_loss << " -> " << a.out << "\n";
    summary.j["predicted_loss"] = result.predicted_loss;
    summary.output(a.out);
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- gen-fixture
struct GenFixtureArgs {
    std::int64_t docs = 50000;
    int n_criteria = 3;
    int n_domains = 8;
    std::uint64_t seed = 1;
    double token_sigma = 0.6;
    double domain_skew = 0.8;
    std::string out_dir;
};

int cmd_gen_fixture(const GenFixtureArgs& a) {
    Summary summary("gen-fixture");
    summary.j["seed"] = a.seed;
    FixtureConfig cfg;
    cfg.docs = a.docs;
    cfg.n_criteria = a.n_criteria;
    cfg.n_domains = a.n_domains;
    cfg.seed = a.seed;
    cfg.token_sigma = a.token_sigma;
    cfg.domain_skew = a.domain_skew;
    fs::create_directories(a.out_dir);
    const std::string corpus_path = a.out_dir + "/corpus.jsonl";
    const std::string manifest_path = a.out_dir + "/manifest.json";
    const Fixture fx = write_fixture(cfg, corpus_path, manifest_path);
    std::cerr << "fixture: " << fx.docs.size() << " documents, " << fx.manifest.token_count_total << " tokens\n";
    summary.output(corpus_path);
    summary.output(manifest_path);
    summary.emit();
    return 0;
}

// ---------------------------------------------------------------- run-all
struct RunAllArgs {
    std::vector<std::string> corpus;
    std::string manifest;
    std::string out_dir;
    int count = 3000;
    std::size_t subset_size = 10000;
    std::string split = "2800:200";
    std::int64_t candidates = 100000;
    int top_k = 10;
    std::uint64_t seed = 0;
    std::string evaluator_cmd;
    std::string evaluator_kind;
    std::string oracle;
    double timeout_s = 86400.0;
    std::string gbdt_config;
    int threads = default_threads();
};

int cmd_run_all(const RunAllArgs& a) {
    Summary summary("run-all");
    const auto shards = expand_globs(a.corpus);
    summary.inputs(shards);
    summary.input(a.manifest);
    summary.j["seed"] = a.seed;
    const auto [train_count, val_count] = parse_split(a.split);
    const CorpusManifest manifest = CorpusManifest::load(a.manifest);
    const EvaluatorSpec evaluator =
        make_evaluator(a.evaluator_cmd, a.evaluator_kind, a.oracle, a.timeout_s, manifest.n_domains());
    if (!a.oracle.empty()) summary.input(a.oracle);
    if (static_cast<std::size_t>(a.count) < train_count + val_count) {
        throw DataError("campaign count " + std::to_string(a.count) + " cannot cover split " + a.split);
    }
    fs::create_directories(a.out_dir);
    const std::string tables_path = a.out_dir + "/tables.json";
    const std::string ledger_path = a.out_dir + "/exps.jsonl";
    const std::string model_path = a.out_dir + "/model.json";
    const std::string eval_path = a.out_dir + "/eval.json";
    const std::string star_path = a.out_dir + "/theta_star.json";
    const std::string report_path = a.out_dir + "/search_report.json";
    const std::string decisions_path = a.out_dir + "/decisions.jsonl";
    const std::string stats_path = a.out_dir + "/stats.json";

    std::cerr << "[1/5] corpus + quantile tables\n";
    const std::vector<DocumentRecord> docs = load_corpus(shards);
    validate_corpus(shards, manifest);
    const QuantileBundle bundle = QuantileBundle::build(docs, manifest, a.subset_size, a.seed);
    bundle.save(tables_path);
    const NormalizedCorpus corpus = NormalizedCorpus::build(docs, bundle.normalizers, manifest.n_domains());

    std::cerr << "[2/5] proxy campaign (" << a.count << " experiments)\n";
    CampaignOptions copts;
    copts.count = a.count;
    copts.seed = a.seed;
    copts.threads = a.threads;
    copts.ledger_path = ledger_path;
    copts.scratch_dir = a.out_dir;
    copts.evaluator = evaluator;
    const Ledger ledger = run_campaign(corpus, bundle, copts);
    std::size_t ok = 0;
    for (const auto& r : ledger.records) ok += r.status == "ok";
    if (ok == 0) throw EvaluatorError("campaign finished with zero successful experiments");
    summary.j["campaign_succeeded"] = ok;

    std::cerr << "[3/5] regression fit (" << train_count << ":" << val_count << ")\n";
    const std::uint64_t split_seed = mix_seed(a.seed, "split");
    const LedgerSplit split = split_ledger(ledger, train_count, val_count, split_seed);
    TrainConfig tconfig;
    if (!a.gbdt_config.empty()) {
        tconfig = TrainConfig::load(a.gbdt_config);
        summary.input(a.gbdt_config);
    }
    const GBDTModel model = fit(split.train_features, split.n_features, split.train_targets, tconfig);
    const EvalReport report = evaluate_mae(model, split.val_features, split.n_features, split.val_targets);
    model.save(model_path);
    report.save(eval_path);
    summary.j["mae"] = report.mae;
    summary.j["split_seed"] = split_seed;

    std::cerr << "[4/5] candidate search (" << a.candidates << " candidates)\n";
    SearchConfig scfg;
    scfg.num_candidates = a.candidates;
    scfg.top_k = a.top_k;
    scfg.seed = mix_seed(a.seed, "search");
    scfg.threads = a.threads;
    const SearchResult result = search(model, manifest.n_criteria(), manifest.n_domains(), scfg);
    result.theta_star.save(star_path);
    result.save_report(report_path);
    summary.j["search_seed"] = scfg.seed;
    summary.j["predicted_loss"] = result.predicted_loss;

    std::cerr << "[5/5] final sampling with the selected parameters\n";
    const RankTableSet star_tables = RankTableSet::build(bundle.subset, result.theta_star.alpha);
    const std::uint64_t final_seed = mix_seed(a.seed, "final");
    const SampleResult final_sample = sample_corpus(corpus, result.theta_star, star_tables, final_seed, a.threads);
    write_decisions(decisions_path, final_sample.decisions);
    final_sample.stats.save(stats_path);
    summary.j["final_seed"] = final_seed;
    summary.j["final_stats"] = final_sample.stats.to_json();

    for (const auto& p : {tables_path, ledger_path, model_path, eval_path, star_path, report_path, decisions_path,
                          stats_path}) {
        summary.output(p);
    }
    summary.emit();
    std::cerr << "pipeline complete -> " << a.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quality/diversity-aware corpus sampling pipeline"};
    app.require_subcommand(1);
    app.set_config("--config-file", "", "TOML config file; command-line flags win");
    app.failure_message(CLI::FailureMessage::help);

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "check corpus shards against a manifest");
    validate->add_option("--corpus", va.corpus, "corpus shard glob(s)")->required();
    validate->add_option("--manifest", va.manifest, "manifest JSON path")->required();

    QuantilesArgs qa;
    auto* quantiles = app.add_subcommand("quantiles", "draw the subset and build normalizer tables");
    quantiles->add_option("--corpus", qa.corpus)->required();
    quantiles->add_option("--manifest", qa.manifest)->required();
    quantiles->add_option("--subset-size", qa.subset_size, "documents in the quantile subset");
    quantiles->add_option("--seed", qa.seed);
    quantiles->add_option("--out", qa.out, "output tables.json")->required();

    GenParamsArgs ga;
    auto* gen_params = app.add_subcommand("gen-params", "draw sampling configurations");
    gen_params->add_option("--n-criteria", ga.n_criteria)->required();
    gen_params->add_option("--n-domains", ga.n_domains)->required();
    gen_params->add_option("--count", ga.count);
    gen_params->add_option("--seed", ga.seed);
    gen_params->add_option("--out", ga.out_dir, "output directory")->required();

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "sample a corpus with one configuration");
    sample->add_option("--corpus", sa.corpus)->required();
    sample->add_option("--theta", sa.theta)->required();
    sample->add_option("--tables", sa.tables)->required();
    sample->add_option("--seed", sa.seed);
    sample->add_option("--out", sa.out, "decisions output (jsonl)")->required();
    sample->add_option("--stats", sa.stats, "stats output (json)")->required();
    sample->add_option("--threads", sa.threads);

    CampaignArgs ca;
    auto* campaign = app.add_subcommand("campaign", "run proxy experiments into a ledger");
    campaign->add_option("--corpus", ca.corpus)->required();
    campaign->add_option("--manifest", ca.manifest)->required();
    campaign->add_option("--count", ca.count);
    campaign->add_option("--subset-size", ca.subset_size);
    campaign->add_option("--seed", ca.seed);
    campaign->add_option("--ledger", ca.ledger)->required();
    campaign->add_option("--evaluator-cmd", ca.evaluator_cmd, "external command with {decisions} placeholder");
    campaign->add_option("--evaluator", ca.evaluator_kind, "\"synthetic\" for the built-in oracle");
    campaign->add_option("--oracle", ca.oracle, "oracle config JSON");
    campaign->add_option("--evaluator-timeout", ca.timeout_s, "external evaluator timeout in seconds");
    campaign->add_option("--threads", ca.threads);
    campaign->add_option("--tables-out", ca.tables_out, "also persist the quantile tables");

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "fit the loss regressor from a ledger");
    fit_cmd->add_option("--ledger", fa.ledger)->required();
    fit_cmd->add_option("--split", fa.split, "train:val record counts");
    fit_cmd->add_option("--config", fa.config, "regressor config JSON");
    fit_cmd->add_option("--seed", fa.seed, "split shuffle seed");
    fit_cmd->add_option("--out", fa.out, "model output")->required();
    fit_cmd->add_option("--report", fa.report, "validation report output")->required();

    SearchArgs sea;
    auto* search_cmd = app.add_subcommand("search", "search the parameter space through the regressor");
    search_cmd->add_option("--model", sea.model)->required();
    search_cmd->add_option("--n-criteria", sea.n_criteria)->required();
    search_cmd->add_option("--n-domains", sea.n_domains)->required();
    search_cmd->add_option("--candidates", sea.candidates);
    search_cmd->add_option("--top-k", sea.top_k);
    search_cmd->add_option("--seed", sea.seed);
    search_cmd->add_option("--out", sea.out, "selected parameters output")->required();
    search_cmd->add_option("--report", sea.report, "search report output");
    search_cmd->add_option("--threads", sea.threads);

    GenFixtureArgs gfa;
    auto* gen_fixture = app.add_subcommand("gen-fixture", "generate a synthetic annotated corpus");
    gen_fixture->add_option("--docs", gfa.docs);
    gen_fixture->add_option("--n-criteria", gfa.n_criteria);
    gen_fixture->add_option("--n-domains", gfa.n_domains);
    gen_fixture->add_option("--seed", gfa.seed);
    gen_fixture->add_option("--token-sigma", gfa.token_sigma);
    gen_fixture->add_option("--domain-skew", gfa.domain_skew);
    gen_fixture->add_option("--out-dir", gfa.out_dir)->required();

    RunAllArgs ra;
    auto* run_all = app.add_subcommand("run-all", "campaign, fit, search, and final sample in one go");
    run_all->add_option("--corpus", ra.corpus)->required();
    run_all->add_option("--manifest", ra.manifest)->required();
    run_all->add_option("--out-dir", ra.out_dir)->required();
    run_all->add_option("--count", ra.count);
    run_all->add_option("--subset-size", ra.subset_size);
    run_all->add_option("--split", ra.split);
    run_all->add_option("--candidates", ra.candidates);
    run_all->add_option("--top-k", ra.top_k);
    run_all->add_option("--seed", ra.seed);
    run_all->add_option("--evaluator-cmd", ra.evaluator_cmd);
    run_all->add_option("--evaluator", ra.evaluator_kind);
    run_all->add_option("--oracle", ra.oracle);
    run_all->add_option("--evaluator-timeout", ra.timeout_s);
    run_all->add_option("--gbdt-config", ra.gbdt_config);
    run_all->add_option("--threads", ra.threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1; --help is 0
    }

    try {
        if (validate->parsed()) return cmd_validate(va);
        if (quantiles->parsed()) return cmd_quantiles(qa);
        if (gen_params->parsed()) return cmd_gen_params(ga);
        if (sample->parsed()) return cmd_sample(sa);
        if (campaign->parsed()) return cmd_campaign(ca);
        if (fit_cmd->parsed()) return cmd_fit(fa);
        if (search_cmd->parsed()) return cmd_search(sea);
        if (gen_fixture->parsed()) return cmd_gen_fixture(gfa);
        if (run_all->parsed()) return cmd_run_all(ra);
    } catch (const EvaluatorError& e) {
        std::cerr << "evaluator error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
