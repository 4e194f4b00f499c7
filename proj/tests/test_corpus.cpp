#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "gridner/corpus.hpp"

#include "support/generators.hpp"

using namespace gridner;

namespace {

std::vector<AnnotatedExample> parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in, "test.jsonl");
}

}  // namespace

TEST_CASE("parses a discontinuous mention record") {
    const auto corpus = parse_text(
        R"({"tokens":["severe","joint",",","shoulder","and","upper","body","pain"],)"
        R"("entities":[{"type":"ADE","spans":[[0,1],[7,7]]}]})"
        "\n");
    REQUIRE(corpus.size() == 1);
    const auto& ex = corpus[0];
    CHECK(ex.sentence.size() == 8);
    REQUIRE(ex.entities.size() == 1);
    CHECK(ex.entities[0].entity_type == "ADE");
    CHECK(ex.entities[0].fragments == std::vector<TokenSpan>{{0, 1}, {7, 7}});
    CHECK(ex.entities[0].discontinuous());
}

TEST_CASE("empty entity list is a valid example") {
    const auto corpus = parse_text(R"({"tokens":["a","b"],"entities":[]})" "\n");
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0].entities.empty());
}

TEST_CASE("record without entities key parses too") {
    const auto corpus = parse_text(R"({"tokens":["a"]})" "\n");
    CHECK(corpus[0].entities.empty());
}

TEST_CASE("span with start > end is rejected with the line number") {
    try {
        parse_text(R"({"tokens":["a","b","c","d"],"entities":[{"type":"ADE","spans":[[3,2]]}]})"
                   "\n");
        FAIL("expected parse_error");
    } catch (const parse_error& err) {
        CHECK(err.line_number == 1);
        CHECK(std::string(err.what()).find("start > end") != std::string::npos);
    }
}

TEST_CASE("fragment outside the sentence names the entity") {
    try {
        parse_text(R"({"tokens":["a","b"],"entities":[{"type":"ADE","spans":[[0,5]]}]})" "\n");
        FAIL("expected parse_error");
    } catch (const parse_error& err) {
        CHECK(std::string(err.what()).find("ADE") != std::string::npos);
    }
}

TEST_CASE("adjacent fragments are rejected") {
    CHECK_THROWS_AS(
        parse_text(
            R"({"tokens":["a","b","c","d"],"entities":[{"type":"ADE","spans":[[0,0],[1,2]]}]})"
            "\n"),
        parse_error);
}

TEST_CASE("duplicate mentions are rejected, not merged") {
    CHECK_THROWS_AS(
        parse_text(R"({"tokens":["a","b","c"],)"
                   R"("entities":[{"type":"ADE","spans":[[0,1]]},{"type":"ADE","spans":[[0,1]]}]})"
                   "\n"),
        parse_error);
}

TEST_CASE("malformed json carries the line number") {
    try {
        parse_text("{\"tokens\":[\"a\"]}\nnot json\n");
        FAIL("expected parse_error");
    } catch (const parse_error& err) {
        CHECK(err.line_number == 2);
    }
}

TEST_CASE("label set from a single-type corpus") {
    const auto corpus = parse_text(
        R"({"tokens":["a","b"],"entities":[{"type":"ADE","spans":[[0,0]]}]})" "\n");
    const LabelSet labels = derive_label_set(corpus);
    CHECK(labels.size() == 4);  // |T| + 3
    CHECK(labels.name_of(0) == "None");
    CHECK(labels.name_of(1) == "Frag");
    CHECK(labels.name_of(2) == "Gap");
    CHECK(labels.name_of(3) == "ADE");
    CHECK(labels.id_of("ADE") == 3);
    CHECK(labels.is_entity_type(3));
    CHECK(!labels.is_entity_type(LabelSet::kGap));
}

TEST_CASE("label set of an unannotated corpus has the three reserved labels") {
    const auto corpus = parse_text(R"({"tokens":["a"],"entities":[]})" "\n");
    CHECK(derive_label_set(corpus).size() == 3);
}

TEST_CASE("two entity types give |C| = 5") {
    const auto corpus = parse_text(
        R"({"tokens":["a","b"],"entities":[{"type":"Disorder","spans":[[0,0]]},)"
        R"({"type":"ADE","spans":[[1,1]]}]})"
        "\n");
    const LabelSet labels = derive_label_set(corpus);
    CHECK(labels.size() == 5);
    // sorted types, dense stable ids
    CHECK(labels.name_of(3) == "ADE");
    CHECK(labels.name_of(4) == "Disorder");
}

TEST_CASE("derive_label_set is order-insensitive") {
    std::mt19937_64 rng(11);
    std::vector<AnnotatedExample> corpus;
    for (int i = 0; i < 20; ++i)
        corpus.push_back(generators::random_example(rng, {.two_types = true}));
    const LabelSet forward = derive_label_set(corpus);
    std::vector<AnnotatedExample> shuffled = corpus;
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng() % i]);
    CHECK(derive_label_set(shuffled) == forward);
}

TEST_CASE("parse -> serialize -> parse is the identity on random corpora") {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 20; ++round) {
        std::vector<AnnotatedExample> corpus;
        const int count = 1 + int(rng() % 8);
        for (int i = 0; i < count; ++i) {
            auto ex = generators::random_example(rng, {.two_types = true});
            if (rng() % 2) ex.sentence.id = "ex-" + std::to_string(i);
            corpus.push_back(std::move(ex));
        }
        std::ostringstream first;
        write_corpus(corpus, first);
        std::istringstream back(first.str());
        const auto reparsed = parse_corpus(back, "roundtrip.jsonl");
        REQUIRE(reparsed.size() == corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            CHECK(reparsed[i].sentence.tokens == corpus[i].sentence.tokens);
            CHECK(reparsed[i].sentence.id == corpus[i].sentence.id);
            CHECK(reparsed[i].entities == corpus[i].entities);
        }
        std::ostringstream second;
        write_corpus(reparsed, second);
        CHECK(first.str() == second.str());
    }
}

TEST_CASE("token vectors loader validates alignment") {
    const auto corpus = parse_text(R"({"tokens":["a","b"],"entities":[]})" "\n");
    const auto dir = std::filesystem::temp_directory_path() / "gridner_vec_test";
    std::filesystem::create_directories(dir);
    write_corpus(corpus, dir / "c.jsonl");
    {
        std::ofstream v(dir / "v.jsonl");
        v << R"({"vectors":[[0.1,0.2],[0.3,0.4]]})" << "\n";
    }
    const auto vecs = load_token_vectors(dir / "v.jsonl", corpus);
    REQUIRE(vecs.size() == 1);
    CHECK(vecs[0].size() == 2);
    CHECK(vecs[0][1][1] == 0.4);
    {
        std::ofstream v(dir / "bad.jsonl");
        v << R"({"vectors":[[0.1,0.2]]})" << "\n";
    }
    CHECK_THROWS_AS(load_token_vectors(dir / "bad.jsonl", corpus), parse_error);
}
