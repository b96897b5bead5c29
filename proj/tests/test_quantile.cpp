#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "quadmix/fixture.hpp"
#include "quadmix/param_space.hpp"
#include "quadmix/quantile.hpp"
#include "quadmix/rng.hpp"
#include "test_util.hpp"

using namespace quadmix;

namespace {

std::vector<DocumentRecord> small_corpus(std::size_t n, int n_domains, std::uint64_t seed) {
    FixtureConfig cfg;
    cfg.docs = static_cast<std::int64_t>(n);
    cfg.n_domains = n_domains;
    cfg.seed = seed;
    return generate_fixture(cfg).docs;
}

SubsetSample sample_of(std::vector<DocumentRecord> docs) {
    SubsetSample s;
    s.docs = std::move(docs);
    s.requested_size = s.docs.size();
    detail::finish_subset(s);
    return s;
}

}  // namespace

TEST_CASE("subset larger than the corpus returns every document") {
    const auto docs = small_corpus(5, 1, 1);
    const SubsetSample s = draw_subset(docs, 10, 42);
    CHECK(s.docs.size() == 5);
}

TEST_CASE("subset draw is deterministic per seed and differs across seeds") {
    const auto docs = small_corpus(10000, 4, 2);
    const SubsetSample a1 = draw_subset(docs, 1000, 7);
    const SubsetSample a2 = draw_subset(docs, 1000, 7);
    REQUIRE(a1.docs.size() == a2.docs.size());
    for (std::size_t i = 0; i < a1.docs.size(); ++i) {
        CHECK(a1.docs[i].doc_id == a2.docs[i].doc_id);
    }
    const SubsetSample b = draw_subset(docs, 1000, 8);
    std::set<std::string> ids_a, ids_b;
    for (const auto& d : a1.docs) ids_a.insert(d.doc_id);
    for (const auto& d : b.docs) ids_b.insert(d.doc_id);
    CHECK(ids_a != ids_b);
}

TEST_CASE("empty corpus cannot be subsampled") {
    std::vector<DocumentRecord> none;
    CHECK_THROWS_AS(draw_subset(none, 10, 1), DataError);
}

TEST_CASE("streaming and in-memory subset draws agree") {
    testutil::ScratchDir dir("subset_stream");
    const auto docs = small_corpus(3000, 2, 5);
    write_corpus(dir.file("c.jsonl"), docs);
    const SubsetSample mem = draw_subset(docs, 500, 9);
    const SubsetSample str = draw_subset_stream({dir.file("c.jsonl")}, 500, 9);
    REQUIRE(mem.docs.size() == str.docs.size());
    for (std::size_t i = 0; i < mem.docs.size(); ++i) {
        CHECK(mem.docs[i].doc_id == str.docs[i].doc_id);
    }
}

TEST_CASE("normalizer is the empirical CDF with <=-counting") {
    SubsetSample s = sample_of({{"a", 1, 0, {1.0}}, {"b", 1, 0, {2.0}}, {"c", 1, 0, {3.0}}, {"d", 1, 0, {4.0}}});
    const NormalizerSet norm = NormalizerSet::build(s);
    CHECK(norm.normalize_one(0, 2.0) == doctest::Approx(0.5));
    CHECK(norm.normalize_one(0, 1.0) == doctest::Approx(0.25));  // 1/subset_size at the minimum
    CHECK(norm.normalize_one(0, 0.5) == doctest::Approx(0.25));  // below range clamps to first percentile
    CHECK(norm.normalize_one(0, 9.0) == doctest::Approx(1.0));   // above range clamps to 1
    CHECK(norm.normalize_one(0, 2.5) == doctest::Approx(0.625)); // linear interpolation between breakpoints
}

TEST_CASE("normalization preserves the smaller-is-better order") {
    const auto docs = small_corpus(2000, 3, 12);
    const NormalizerSet norm = NormalizerSet::build(draw_subset(docs, 800, 3));
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto& a = docs[rng.next_below(docs.size())];
        const auto& b = docs[rng.next_below(docs.size())];
        for (std::size_t n = 0; n < a.scores.size(); ++n) {
            if (a.scores[n] <= b.scores[n]) {
                CHECK(norm.normalize_one(n, a.scores[n]) <= norm.normalize_one(n, b.scores[n]));
            }
        }
    }
}

TEST_CASE("degenerate criterion maps everything to 1") {
    SubsetSample s = sample_of({{"a", 1, 0, {5.0}}, {"b", 1, 0, {5.0}}, {"c", 1, 0, {5.0}}});
    const NormalizerSet norm = NormalizerSet::build(s);
    CHECK(norm.normalize_one(0, 5.0) == 1.0);
    CHECK(norm.normalize_one(0, -1.0) == 1.0);
    CHECK(norm.normalize_one(0, 99.0) == 1.0);
}

TEST_CASE("rank table matches the hand-computed token-weighted CDF") {
    // domain 0: (merged 0.2, 90 tokens), (merged 0.8, 10 tokens)
    NormalizedSubset sub;
    sub.n_criteria = 1;
    sub.n_domains = 1;
    sub.doc_ids = {"a", "b"};
    sub.token_counts = {90, 10};
    sub.domain_ids = {0, 0};
    sub.scores = {0.2, 0.8};
    sub.domain_rows = {{0, 1}};
    const RankTableSet tables = RankTableSet::build(sub, {{1.0}});
    CHECK(tables.rank(0, 0.2) == doctest::Approx(0.9));
    CHECK(tables.rank(0, 0.8) == doctest::Approx(1.0));
    CHECK(tables.rank(0, 0.5) == doctest::Approx(0.9 + 0.1 * (0.5 - 0.2) / (0.8 - 0.2)));
}

TEST_CASE("a shared merged score ranks as 1 within its domain") {
    NormalizedSubset sub;
    sub.n_criteria = 1;
    sub.n_domains = 1;
    sub.doc_ids = {"a", "b", "c"};
    sub.token_counts = {5, 7, 9};
    sub.domain_ids = {0, 0, 0};
    sub.scores = {0.4, 0.4, 0.4};
    sub.domain_rows = {{0, 1, 2}};
    const RankTableSet tables = RankTableSet::build(sub, {{1.0}});
    CHECK(tables.rank(0, 0.4) == 1.0);
}

TEST_CASE("empty domain answers rank 1.0") {
    NormalizedSubset sub;
    sub.n_criteria = 1;
    sub.n_domains = 2;
    sub.doc_ids = {"a"};
    sub.token_counts = {5};
    sub.domain_ids = {0};
    sub.scores = {0.4};
    sub.domain_rows = {{0}, {}};
    const RankTableSet tables = RankTableSet::build(sub, {{1.0}, {1.0}}, /*warn_empty=*/false);
    CHECK(tables.domain_empty(1));
    CHECK(tables.rank(1, 0.1) == 1.0);
}

TEST_CASE("a low rank means most domain tokens are strictly worse") {
    // 100 one-token docs with distinct merged scores: the doc with the 5th
    // smallest score has rank 0.05 and the other 95 tokens all score worse.
    std::vector<DocumentRecord> docs;
    for (int i = 0; i < 100; ++i) {
        docs.push_back({"doc_" + std::to_string(1000 + i), 1, 0, {static_cast<double>(i)}});
    }
    const SubsetSample all = sample_of(docs);
    const NormalizerSet norm = NormalizerSet::build(all);
    const std::vector<std::vector<double>> alpha{{1.0}};
    const double q5 = norm.normalize_one(0, 4.0);  // 5th smallest raw score
    const double r = rank_exact(docs, norm, alpha, 0, q5);
    CHECK(r == doctest::Approx(0.05));
    int strictly_worse = 0;
    for (const auto& d : docs) {
        if (norm.normalize_one(0, d.scores[0]) > q5) ++strictly_worse;
    }
    CHECK(strictly_worse == 95);
}

TEST_CASE("exact rank oracle on tiny domains") {
    std::vector<DocumentRecord> docs{{"a", 3, 0, {1.0}}};
    const SubsetSample all = sample_of(docs);
    const NormalizerSet norm = NormalizerSet::build(all);
    const std::vector<std::vector<double>> alpha{{1.0}};
    const double q = norm.normalize_one(0, 1.0);
    CHECK(rank_exact(docs, norm, alpha, 0, q) == doctest::Approx(1.0));

    std::vector<DocumentRecord> three{{"a", 1, 0, {1.0}}, {"b", 1, 0, {2.0}}, {"c", 1, 0, {3.0}}};
    const SubsetSample s3 = sample_of(three);
    const NormalizerSet n3 = NormalizerSet::build(s3);
    const double qmid = n3.normalize_one(0, 2.0);
    CHECK(rank_exact(three, n3, alpha, 0, qmid) == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(rank_exact(three, n3, alpha, 1, 0.5), DataError);
}

TEST_CASE("table lookups are monotone") {
    FixtureConfig cfg;
    cfg.docs = 5000;
    cfg.n_domains = 4;
    cfg.seed = 21;
    const Fixture fx = generate_fixture(cfg);
    const QuantileBundle bundle = QuantileBundle::build(fx.docs, fx.manifest, 1200, 5);
    Rng rng(3);
    const auto [draw, params] = draw_params(3, 4, rng);
    const RankTableSet tables = RankTableSet::build(bundle.subset, params.alpha);
    Rng qr(4);
    for (int m = 0; m < 4; ++m) {
        for (int trial = 0; trial < 200; ++trial) {
            double s1 = qr.next_double();
            double s2 = qr.next_double();
            if (s1 > s2) std::swap(s1, s2);
            CHECK(tables.rank(m, s1) <= tables.rank(m, s2));
        }
    }
    for (std::size_t n = 0; n < bundle.normalizers.n_criteria(); ++n) {
        for (int trial = 0; trial < 100; ++trial) {
            const double s1 = qr.next_double() * 10.0 - 5.0;
            const double s2 = s1 + qr.next_double() * 5.0;
            CHECK(bundle.normalizers.table(n).lookup(s1) <= bundle.normalizers.table(n).lookup(s2));
        }
    }
}

TEST_CASE("every subset member has a positive self-rank bounded below by its token share") {
    FixtureConfig cfg;
    cfg.docs = 4000;
    cfg.n_domains = 5;
    cfg.seed = 31;
    const Fixture fx = generate_fixture(cfg);
    const QuantileBundle bundle = QuantileBundle::build(fx.docs, fx.manifest, 1500, 11);
    Rng rng(5);
    const auto [draw, params] = draw_params(3, 5, rng);
    const RankTableSet tables = RankTableSet::build(bundle.subset, params.alpha);

    std::vector<std::int64_t> domain_tokens(5, 0);
    for (std::size_t i = 0; i < bundle.subset.doc_ids.size(); ++i) {
        domain_tokens[static_cast<std::size_t>(bundle.subset.domain_ids[i])] += bundle.subset.token_counts[i];
    }
    for (std::size_t i = 0; i < bundle.subset.doc_ids.size(); ++i) {
        const int m = bundle.subset.domain_ids[i];
        const double q = merged_score(bundle.subset.row(i), params.alpha[static_cast<std::size_t>(m)]);
        const double r = tables.rank(m, q);
        const double lower = static_cast<double>(bundle.subset.token_counts[i]) /
                             static_cast<double>(domain_tokens[static_cast<std::size_t>(m)]);
        CHECK(r >= lower - 1e-12);
        CHECK(r > 0.0);
    }
}

TEST_CASE("rank tables are bit-identical for identical inputs") {
    FixtureConfig cfg;
    cfg.docs = 3000;
    cfg.n_domains = 4;
    cfg.seed = 41;
    const Fixture fx = generate_fixture(cfg);
    const QuantileBundle bundle = QuantileBundle::build(fx.docs, fx.manifest, 1000, 13);
    Rng rng(6);
    const auto [draw, params] = draw_params(3, 4, rng);
    const RankTableSet t1 = RankTableSet::build(bundle.subset, params.alpha);
    const RankTableSet t2 = RankTableSet::build(bundle.subset, params.alpha);
    for (int m = 0; m < 4; ++m) {
        CHECK(t1.table(m).to_json().dump() == t2.table(m).to_json().dump());
    }
    CHECK(t1.alpha_fp() == t2.alpha_fp());
}

TEST_CASE("subset tables track the exact full-corpus rank") {
    FixtureConfig cfg;
    cfg.docs = 12000;
    cfg.n_domains = 2;  // enough members per table for a tight spot check
    cfg.seed = 51;
    const Fixture fx = generate_fixture(cfg);
    const QuantileBundle bundle = QuantileBundle::build(fx.docs, fx.manifest, 4000, 17);
    Rng rng(7);
    const auto [draw, params] = draw_params(3, 2, rng);
    const RankTableSet tables = RankTableSet::build(bundle.subset, params.alpha);
    Rng pick(8);
    int within = 0;
    const int trials = 60;
    for (int t = 0; t < trials; ++t) {
        const auto& d = fx.docs[pick.next_below(fx.docs.size())];
        const auto norm = bundle.normalizers.normalize(d.scores);
        const double q = merged_score(norm, params.alpha[static_cast<std::size_t>(d.domain_id)]);
        const double approx = tables.rank(d.domain_id, q);
        const double exact = rank_exact(fx.docs, bundle.normalizers, params.alpha, d.domain_id, q);
        if (std::abs(approx - exact) <= 0.03) ++within;
    }
    CHECK(within >= trials - 2);
}

TEST_CASE("bundle serialization round-trips") {
    testutil::ScratchDir dir("bundle_io");
    FixtureConfig cfg;
    cfg.docs = 800;
    cfg.n_domains = 3;
    cfg.seed = 61;
    const Fixture fx = generate_fixture(cfg);
    const QuantileBundle bundle = QuantileBundle::build(fx.docs, fx.manifest, 300, 19);
    bundle.save(dir.file("tables.json"));
    const QuantileBundle loaded = QuantileBundle::load(dir.file("tables.json"));
    CHECK(loaded.n_criteria == bundle.n_criteria);
    CHECK(loaded.subset.doc_ids == bundle.subset.doc_ids);
    CHECK(loaded.subset.scores == bundle.subset.scores);
    Rng rng(9);
    const auto [draw, params] = draw_params(3, 3, rng);
    const RankTableSet a = RankTableSet::build(bundle.subset, params.alpha);
    const RankTableSet b = RankTableSet::build(loaded.subset, params.alpha);
    for (int m = 0; m < 3; ++m) {
        CHECK(a.table(m).to_json().dump() == b.table(m).to_json().dump());
    }
}
