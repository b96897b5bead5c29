#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "quadmix/corpus.hpp"
#include "quadmix/fixture.hpp"
#include "quadmix/rng.hpp"
#include "test_util.hpp"

using namespace quadmix;

namespace {

CorpusManifest tiny_manifest(int n_criteria, int n_domains) {
    CorpusManifest m;
    for (int n = 0; n < n_criteria; ++n) m.criteria_names.push_back("c" + std::to_string(n));
    for (int d = 0; d < n_domains; ++d) m.domain_names.push_back("d" + std::to_string(d));
    return m;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("empty stream with empty manifest counts zero") {
    testutil::ScratchDir dir("corpus_empty");
    write_lines(dir.file("c.jsonl"), {});
    auto m = tiny_manifest(1, 1);
    m.doc_count = 0;
    const CorpusStats stats = validate_corpus({dir.file("c.jsonl")}, m);
    CHECK(stats.doc_count == 0);
    CHECK(stats.token_total == 0);
    CHECK(stats.per_domain_docs[0] == 0);
}

TEST_CASE("singleton corpus validates and counts") {
    testutil::ScratchDir dir("corpus_one");
    DocumentRecord d{"a", 5, 0, {0.1}};
    write_lines(dir.file("c.jsonl"), {serialize_record(d)});
    const CorpusStats stats = validate_corpus({dir.file("c.jsonl")}, tiny_manifest(1, 1));
    CHECK(stats.doc_count == 1);
    CHECK(stats.token_total == 5);
    CHECK(stats.per_criterion[0].min == doctest::Approx(0.1));
    CHECK(stats.per_criterion[0].mean == doctest::Approx(0.1));
}

TEST_CASE("duplicate doc_id is rejected and names the id") {
    testutil::ScratchDir dir("corpus_dup");
    DocumentRecord d{"a", 5, 0, {0.1}};
    write_lines(dir.file("c.jsonl"), {serialize_record(d), serialize_record(d)});
    CHECK_THROWS_WITH_AS(validate_corpus({dir.file("c.jsonl")}, tiny_manifest(1, 1)),
                         doctest::Contains("duplicate doc_id \"a\""), DataError);
}

TEST_CASE("validation rejects out-of-range and malformed records") {
    testutil::ScratchDir dir("corpus_bad");
    const auto m = tiny_manifest(2, 2);

    SUBCASE("domain out of range") {
        write_lines(dir.file("c.jsonl"), {serialize_record({"a", 5, 2, {0.1, 0.2}})});
        CHECK_THROWS_WITH_AS(validate_corpus({dir.file("c.jsonl")}, m), doctest::Contains("domain_id"), DataError);
    }
    SUBCASE("score length mismatch") {
        write_lines(dir.file("c.jsonl"), {serialize_record({"a", 5, 0, {0.1}})});
        CHECK_THROWS_WITH_AS(validate_corpus({dir.file("c.jsonl")}, m), doctest::Contains("length"), DataError);
    }
    SUBCASE("non-finite score") {
        write_lines(dir.file("c.jsonl"), {R"({"doc_id":"a","token_count":5,"domain_id":0,"scores":[0.1,1e999]})"});
        CHECK_THROWS_AS(validate_corpus({dir.file("c.jsonl")}, m), DataError);
    }
    SUBCASE("zero token count") {
        write_lines(dir.file("c.jsonl"), {serialize_record({"a", 0, 0, {0.1, 0.2}})});
        CHECK_THROWS_WITH_AS(validate_corpus({dir.file("c.jsonl")}, m), doctest::Contains("token_count"), DataError);
    }
}

TEST_CASE("reader reports the failing line number") {
    testutil::ScratchDir dir("corpus_line");
    write_lines(dir.file("c.jsonl"),
                {serialize_record({"a", 5, 0, {0.1}}), "{not json", serialize_record({"b", 5, 0, {0.1}})});
    RecordReader reader(dir.file("c.jsonl"));
    CHECK(reader.next().has_value());
    CHECK_THROWS_WITH_AS(reader.next(), doctest::Contains(":2"), DataError);
}

TEST_CASE("stream yields records in file order; empty file yields none") {
    testutil::ScratchDir dir("corpus_order");
    std::vector<DocumentRecord> docs{{"x", 1, 0, {1.0}}, {"y", 2, 0, {2.0}}, {"z", 3, 0, {3.0}}};
    write_corpus(dir.file("c.jsonl"), docs);
    RecordReader reader(dir.file("c.jsonl"));
    for (const auto& expect : docs) {
        auto got = reader.next();
        REQUIRE(got.has_value());
        CHECK(got->doc_id == expect.doc_id);
        CHECK(got->token_count == expect.token_count);
    }
    CHECK_FALSE(reader.next().has_value());

    write_lines(dir.file("empty.jsonl"), {});
    RecordReader empty(dir.file("empty.jsonl"));
    CHECK_FALSE(empty.next().has_value());
}

TEST_CASE("serialize/stream round-trips canonical files byte-identically") {
    testutil::ScratchDir dir("corpus_roundtrip");
    FixtureConfig cfg;
    cfg.docs = 500;
    cfg.seed = 7;
    const Fixture fx = write_fixture(cfg, dir.file("c.jsonl"), dir.file("m.json"));
    const std::string original = testutil::slurp(dir.file("c.jsonl"));

    const auto loaded = load_corpus({dir.file("c.jsonl")});
    REQUIRE(loaded.size() == fx.docs.size());
    std::string rewritten;
    for (const auto& d : loaded) {
        rewritten += serialize_record(d);
        rewritten += "\n";
    }
    CHECK(rewritten == original);
}

TEST_CASE("aggregate stats are invariant under record permutation") {
    testutil::ScratchDir dir("corpus_perm");
    FixtureConfig cfg;
    cfg.docs = 400;
    cfg.n_domains = 3;
    cfg.seed = 11;
    Fixture fx = generate_fixture(cfg);
    write_corpus(dir.file("a.jsonl"), fx.docs);
    const CorpusStats forward = validate_corpus({dir.file("a.jsonl")}, fx.manifest);

    Rng rng(99);
    rng.shuffle(std::span<DocumentRecord>(fx.docs));
    write_corpus(dir.file("b.jsonl"), fx.docs);
    const CorpusStats shuffled = validate_corpus({dir.file("b.jsonl")}, fx.manifest);
    CHECK(forward == shuffled);
}

TEST_CASE("manifest totals are cross-checked when provided") {
    testutil::ScratchDir dir("corpus_manifest");
    FixtureConfig cfg;
    cfg.docs = 50;
    cfg.seed = 3;
    Fixture fx = generate_fixture(cfg);
    write_corpus(dir.file("c.jsonl"), fx.docs);
    auto bad = fx.manifest;
    bad.token_count_total += 1;
    bad.per_domain_token_counts.clear();
    CHECK_THROWS_WITH_AS(validate_corpus({dir.file("c.jsonl")}, bad), doctest::Contains("token_count_total"),
                         DataError);
    CHECK_NOTHROW(validate_corpus({dir.file("c.jsonl")}, fx.manifest));
}

TEST_CASE("uniqueness is enforced across shards") {
    testutil::ScratchDir dir("corpus_shards");
    write_lines(dir.file("s0.jsonl"), {serialize_record({"a", 5, 0, {0.1}})});
    write_lines(dir.file("s1.jsonl"), {serialize_record({"a", 6, 0, {0.2}})});
    CHECK_THROWS_WITH_AS(validate_corpus({dir.file("s0.jsonl"), dir.file("s1.jsonl")}, tiny_manifest(1, 1)),
                         doctest::Contains("duplicate"), DataError);
}
