#include <doctest.h>

#include <set>

#include "refinery/rng.hpp"
#include "support.hpp"

using namespace refinery;
using namespace refinery::testing;

namespace {

PromptLibrary& prompts() {
    static PromptLibrary lib;
    return lib;
}

Evaluator make_evaluator() { return Evaluator(prompts(), EvalOptions{"det"}); }

Document tiny_doc() {
    Document d;
    d.id = "d1";
    d.text = "The mission landed in alpha. The crew numbered bravo.";
    return d;
}

std::vector<FactCheckVerdict> verdicts_from_labels(const std::vector<int>& labels) {
    std::vector<FactCheckVerdict> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        FactCheckVerdict v;
        v.sentence_index = static_cast<int>(i + 1);
        v.category = labels[i] ? ErrorCategory::entity : ErrorCategory::no_error;
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_SUITE("evaluator") {

TEST_CASE("fact check: well-formed array parses into ordered verdicts") {
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response(
        R"([{"sentence":"a","reason":"fine","category":"no error"},)"
        R"({"sentence":"b","reason":"wrong entity","category":"entity error"},)"
        R"({"sentence":"c","reason":"made up","category":"out-of-context error"}])");
    auto evaluator = make_evaluator();
    auto summary = make_summary("d1", "m", {"a", "b", "c"});
    FactCheckResult r = evaluator.fact_check(tiny_doc(), summary, *mock);
    REQUIRE(r.verdicts.size() == 3);
    CHECK(r.verdicts[0].sentence_index == 1);
    CHECK(r.verdicts[0].category == ErrorCategory::no_error);
    CHECK(r.verdicts[1].category == ErrorCategory::entity);
    CHECK(r.verdicts[1].reason == "wrong entity");
    CHECK(r.verdicts[2].category == ErrorCategory::out_of_context);
    CHECK_FALSE(r.raw.empty());

    // the outgoing prompt embeds the document and the numbered sentences
    const std::string& prompt = mock->request(0).messages[0].content;
    CHECK(prompt.find(tiny_doc().text) != std::string::npos);
    CHECK(prompt.find("Summary with 3 sentences") != std::string::npos);
    CHECK(prompt.find("1. a") != std::string::npos);
    CHECK(prompt.find("3. c") != std::string::npos);
}

TEST_CASE("fact check: code fences are repaired away") {
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response("```json\n[{\"category\":\"no error\"},{\"category\":\"entity "
                        "error\"}]\n```");
    auto evaluator = make_evaluator();
    auto r = evaluator.fact_check(tiny_doc(), make_summary("d1", "m", {"a", "b"}), *mock);
    REQUIRE(r.verdicts.size() == 2);
    CHECK(r.verdicts[1].category == ErrorCategory::entity);
}

TEST_CASE("fact check: verdict count mismatch is a cardinality error") {
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response(R"([{"category":"no error"}])");
    auto evaluator = make_evaluator();
    CHECK_THROWS_AS(evaluator.fact_check(tiny_doc(), make_summary("d1", "m", {"a", "b"}), *mock),
                    CardinalityError);
}

TEST_CASE("fact check: nine-sentence worked example labels") {
    // 9 sentences, only sentence 7 inconsistent -> labels [0,0,0,0,0,0,1,0,0]
    std::vector<std::string> sentences;
    json arr = json::array();
    for (int i = 1; i <= 9; ++i) {
        sentences.push_back("Sentence number " + std::to_string(i) + ".");
        arr.push_back(json{{"sentence", sentences.back()},
                           {"reason", i == 7 ? "wrong fact" : "ok"},
                           {"category", i == 7 ? "out-of-context error" : "no error"}});
    }
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response(arr.dump());
    auto evaluator = make_evaluator();
    auto r = evaluator.fact_check(tiny_doc(), make_summary("d1", "m", sentences), *mock);
    std::size_t correct = 0;
    for (const auto& v : r.verdicts)
        if (v.category == ErrorCategory::no_error) ++correct;
    CHECK(correct == 8);
    CHECK(score_faithfulness(r.verdicts, 9) == doctest::Approx(8.0 / 9.0));
}

TEST_CASE("key facts: parse, cap at 16, deduplicate") {
    auto evaluator = make_evaluator();
    {
        auto mock = std::make_shared<MockChatBackend>();
        mock->push_response(R"({"key facts":["a","b"]})");
        auto r = evaluator.extract_key_facts("text", *mock, "d1");
        CHECK(r.facts.facts == std::vector<std::string>{"a", "b"});
        CHECK(r.facts.doc_id == "d1");
        CHECK(r.warnings.empty());
    }
    {
        json big = json::array();
        for (int i = 0; i < 18; ++i) big.push_back("fact " + std::to_string(i));
        auto mock = std::make_shared<MockChatBackend>();
        mock->push_response(json{{"key facts", big}}.dump());
        auto r = evaluator.extract_key_facts("text", *mock);
        CHECK(r.facts.facts.size() == 16);
        REQUIRE(r.warnings.size() == 1);
        CHECK(r.warnings[0].find("truncated") != std::string::npos);
    }
    {
        auto mock = std::make_shared<MockChatBackend>();
        mock->push_response(R"({"key facts":["same","same","other"]})");
        auto r = evaluator.extract_key_facts("text", *mock);
        CHECK(r.facts.facts == std::vector<std::string>{"same", "other"});
    }
    {
        auto mock = std::make_shared<MockChatBackend>();
        mock->push_response(R"({"key facts":[]})");
        CHECK_THROWS_AS(evaluator.extract_key_facts("text", *mock), ParseError);
    }
}

TEST_CASE("alignment: spec example edges") {
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response(
        R"([{"key fact":"k1","response":"Yes","line number":[1]},)"
        R"({"key fact":"k2","response":"No","line number":[]},)"
        R"({"key fact":"k3","response":"Yes","line number":[1,2]}])");
    auto evaluator = make_evaluator();
    KeyFactSet facts;
    facts.facts = {"k1", "k2", "k3"};
    auto r = evaluator.align_key_facts(make_summary("d1", "m", {"s1", "s2", "s3"}), facts, *mock);
    REQUIRE(r.edges.size() == 3);
    CHECK(r.edges[0].matched);
    CHECK(r.edges[0].line_numbers == std::vector<int>{1});
    CHECK_FALSE(r.edges[1].matched);
    CHECK(r.edges[1].line_numbers.empty());
    CHECK(r.edges[2].line_numbers == std::vector<int>{1, 2});

    auto [comp, conc] = score_alignment(r.edges, 3, 3);
    CHECK(comp == doctest::Approx(2.0 / 3.0));
    CHECK(conc == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("alignment: out-of-range cited line dropped with warning") {
    auto mock = std::make_shared<MockChatBackend>();
    mock->push_response(R"([{"key fact":"k1","response":"Yes","line number":[1,7]}])");
    auto evaluator = make_evaluator();
    KeyFactSet facts;
    facts.facts = {"k1"};
    auto r = evaluator.align_key_facts(make_summary("d1", "m", {"s1", "s2", "s3"}), facts, *mock);
    REQUIRE(r.edges.size() == 1);
    CHECK(r.edges[0].matched);
    CHECK(r.edges[0].line_numbers == std::vector<int>{1});
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("7") != std::string::npos);
}

TEST_CASE("scores: degenerate and boundary cases") {
    CHECK(score_faithfulness(verdicts_from_labels({0, 0, 0, 0}), 4) == 1.0);
    CHECK(score_faithfulness(verdicts_from_labels({1, 1, 1}), 3) == 0.0);
    CHECK_THROWS_AS(score_faithfulness({}, 0), UndefinedScoreError);

    std::vector<AlignmentEdge> to_one;
    for (int k = 1; k <= 4; ++k) to_one.push_back({k, true, {1}});
    auto [comp, conc] = score_alignment(to_one, 4, 5);
    CHECK(comp == 1.0);
    CHECK(conc == doctest::Approx(1.0 / 5.0));
    CHECK_THROWS_AS(score_alignment({}, 0, 3), UndefinedScoreError);
    CHECK_THROWS_AS(score_alignment(to_one, 4, 0), UndefinedScoreError);
}

TEST_CASE("composite: paper row and trivial cases") {
    DimensionScores table2{0.780, 0.464, 0.764};
    CHECK(composite_score(table2) == doctest::Approx(0.669).epsilon(0.001));
    CHECK(std::abs(composite_score(table2) - 0.669) < 0.0005);
    CHECK(composite_score({1, 1, 1}) == 1.0);
    CHECK(composite_score({0.8, 0.5, 0.2}) == doctest::Approx(0.5));
}

TEST_CASE("repair: fences, prose, trailing commas, totality") {
    CHECK(repair_and_parse_json("```json\n[{\"a\":1}]\n```") == json::parse("[{\"a\":1}]"));
    CHECK(repair_and_parse_json("Here is the answer: [1, 2, 3]") == json::parse("[1,2,3]"));
    CHECK(repair_and_parse_json("[1, 2, 3,]") == json::parse("[1,2,3]"));
    CHECK(repair_and_parse_json("{\"a\": [1,], }") == json::parse("{\"a\":[1]}"));
    CHECK(repair_and_parse_json("text {\"a\": \"br]ace in string\"} trailing") ==
          json::parse("{\"a\":\"br]ace in string\"}"));
    CHECK_THROWS_AS(repair_and_parse_json("no json at all"), ParseError);
    CHECK_THROWS_AS(repair_and_parse_json(""), ParseError);

    // totality: arbitrary byte soup never crashes, always value-or-ParseError
    CounterRng rng(99, 0);
    for (int i = 0; i < 200; ++i) {
        std::string bytes;
        const std::size_t len = rng.below(60);
        for (std::size_t k = 0; k < len; ++k)
            bytes += static_cast<char>(32 + rng.below(95));
        try {
            (void)repair_and_parse_json(bytes);
        } catch (const ParseError&) {
        }
    }
}

TEST_CASE("category mapping is lenient") {
    CHECK(category_from_name("no error") == ErrorCategory::no_error);
    CHECK(category_from_name("No Error") == ErrorCategory::no_error);
    CHECK(category_from_name("out-of-context error") == ErrorCategory::out_of_context);
    CHECK(category_from_name("out of context") == ErrorCategory::out_of_context);
    CHECK(category_from_name("Entity") == ErrorCategory::entity);
    CHECK(category_from_name("entity_error") == ErrorCategory::entity);
    CHECK(category_from_name("something new") == ErrorCategory::other);
}

TEST_CASE("metric oracle: 1,000 random instances match brute-force counting") {
    // Independent oracle: count S_fact and walk the edge set directly.
    CounterRng rng(20240817, 0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(6);
        const std::size_t m = 1 + rng.below(6);

        std::vector<FactCheckVerdict> verdicts;
        for (std::size_t i = 0; i < n; ++i) {
            FactCheckVerdict v;
            v.sentence_index = static_cast<int>(i + 1);
            v.category = rng.below(2) ? ErrorCategory::no_error
                                      : static_cast<ErrorCategory>(1 + rng.below(8));
            verdicts.push_back(v);
        }
        std::vector<AlignmentEdge> edges;
        for (std::size_t k = 0; k < m; ++k) {
            AlignmentEdge e;
            e.keyfact_index = static_cast<int>(k + 1);
            e.matched = rng.below(2) == 1;
            if (e.matched) {
                std::set<int> lines;
                const std::size_t cites = 1 + rng.below(n);
                for (std::size_t c = 0; c < cites; ++c)
                    lines.insert(static_cast<int>(1 + rng.below(n)));
                e.line_numbers.assign(lines.begin(), lines.end());
            }
            edges.push_back(e);
        }

        // brute force over sets
        std::size_t s_fact = 0;
        for (const auto& v : verdicts)
            if (v.category == ErrorCategory::no_error) ++s_fact;
        std::size_t matched = 0;
        std::set<int> cited;
        for (const auto& e : edges) {
            if (e.matched) ++matched;
            for (int line : e.line_numbers) cited.insert(line);
        }

        const double faith = score_faithfulness(verdicts, n);
        auto [comp, conc] = score_alignment(edges, m, n);
        CHECK(faith == static_cast<double>(s_fact) / static_cast<double>(n));
        CHECK(comp == static_cast<double>(matched) / static_cast<double>(m));
        CHECK(conc == static_cast<double>(cited.size()) / static_cast<double>(n));
        CHECK((faith >= 0 && faith <= 1));
        CHECK((comp >= 0 && comp <= 1));
        CHECK((conc >= 0 && conc <= 1));
    }
}

TEST_CASE("monotonicity of the three scores") {
    CounterRng rng(5150, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(5);
        auto verdicts = verdicts_from_labels([&] {
            std::vector<int> l(n);
            for (auto& x : l) x = static_cast<int>(rng.below(2));
            return l;
        }());
        const double base = score_faithfulness(verdicts, n);
        for (auto& v : verdicts) {
            if (v.category == ErrorCategory::no_error) continue;
            auto flipped = verdicts;
            flipped[static_cast<std::size_t>(v.sentence_index - 1)].category =
                ErrorCategory::no_error;
            CHECK(score_faithfulness(flipped, n) >= base);
        }

        std::vector<AlignmentEdge> edges{{1, false, {}}, {2, true, {1}}};
        auto [comp_before, conc_before] = score_alignment(edges, 2, n);
        edges[0].matched = true;  // adding a matched edge
        auto [comp_after, conc_after] = score_alignment(edges, 2, n);
        CHECK(comp_after >= comp_before);
        CHECK(conc_after >= conc_before);
        edges[1].line_numbers.push_back(2);  // previously uncited sentence gains a citation
        auto [comp_cited, conc_cited] = score_alignment(edges, 2, n);
        CHECK(conc_cited >= conc_after);
        CHECK(comp_cited == comp_after);
    }
}

TEST_CASE("evaluate_summary bundles labels and scores with the world detector") {
    auto mock = make_mock(detector_responder());
    auto docs = world_docs();
    auto evaluator = make_evaluator();
    EvalBundle bundle =
        evaluate_summary(evaluator, docs[0].doc, docs[0].summaries[0], docs[0].facts, *mock);
    CHECK(bundle.labels.faith == std::vector<int>{0, 0});
    CHECK(bundle.labels.comp == std::vector<int>{0, 1});
    CHECK(bundle.labels.conc == std::vector<int>{0, 1});
    CHECK(bundle.scores.faithfulness == 1.0);
    CHECK(bundle.scores.completeness == 0.5);
    CHECK(bundle.scores.conciseness == 0.5);
    CHECK(mock->call_count() == 2);  // fact check + alignment
    // label-derived scores agree with the direct formulas
    CHECK(scores_from_labels(bundle.labels) == bundle.scores);
}

}  // TEST_SUITE
