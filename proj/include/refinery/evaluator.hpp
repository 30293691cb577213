#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refinery/backend.hpp"
#include "refinery/core.hpp"
#include "refinery/prompts.hpp"

namespace refinery {

// A score was requested over an empty sentence or key-fact set.
class UndefinedScoreError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Fact checking
// ---------------------------------------------------------------------------

enum class ErrorCategory {
    no_error,
    out_of_context,
    entity,
    predicate,
    circumstantial,
    grammatical,
    coreference,
    linking,
    other,
};

std::string category_name(ErrorCategory c);

// Lenient mapping from model output; unrecognized text maps to `other`.
ErrorCategory category_from_name(const std::string& name);

struct FactCheckVerdict {
    int sentence_index = 0;  // 1-based
    std::string reason;
    ErrorCategory category = ErrorCategory::no_error;
};

struct FactCheckResult {
    std::vector<FactCheckVerdict> verdicts;
    std::string raw;  // model output retained for audit
};

// ---------------------------------------------------------------------------
// Key facts
// ---------------------------------------------------------------------------

struct KeyFactResult {
    KeyFactSet facts;
    std::vector<std::string> warnings;
    std::string raw;
};

struct AlignmentEdge {
    int keyfact_index = 0;  // 1-based
    bool matched = false;
    std::vector<int> line_numbers;  // sorted unique 1-based sentence indices
};

struct AlignmentResult {
    std::vector<AlignmentEdge> edges;
    std::vector<std::string> warnings;
    std::string raw;
};

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

struct DimensionScores {
    double faithfulness = 0;
    double completeness = 0;
    double conciseness = 0;

    double composite() const;

    bool operator==(const DimensionScores&) const = default;
};

json scores_to_json(const DimensionScores& s);
DimensionScores scores_from_json(const json& j);

// Fraction of sentences judged factually correct: |S_fact| / N.
double score_faithfulness(const std::vector<FactCheckVerdict>& verdicts, std::size_t n);

// (completeness, conciseness) = (matched facts / M, cited sentences / N).
std::pair<double, double> score_alignment(const std::vector<AlignmentEdge>& edges,
                                          std::size_t m, std::size_t n);

double composite_score(const DimensionScores& s);

// ---------------------------------------------------------------------------
// Output repair
// ---------------------------------------------------------------------------

// Locates the first balanced JSON array or object in raw model output,
// tolerating code fences, surrounding prose, and trailing commas.
// Never crashes; anything unusable raises ParseError carrying the raw text.
json repair_and_parse_json(const std::string& raw);

// "1. first\n2. second" rendering used by the evaluation prompts.
std::string numbered_lines(const std::vector<std::string>& items);

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string backend_id = "evaluator";
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<int> seed;
};

class Evaluator {
public:
    explicit Evaluator(const PromptLibrary& prompts, EvalOptions options = {});

    // One verdict per summary sentence, in order. Verdict count differing
    // from N raises CardinalityError.
    FactCheckResult fact_check(const Document& doc, const SummaryRecord& summary,
                               ChatBackend& backend) const;

    // Decomposes `text` into at most 16 key facts; overflow is truncated
    // with a warning, duplicates keep their first occurrence.
    KeyFactResult extract_key_facts(const std::string& text, ChatBackend& backend,
                                    const std::string& doc_id = {}) const;

    // One edge per key fact; "Yes" responses carry cited line numbers,
    // out-of-range lines are dropped with a warning.
    AlignmentResult align_key_facts(const SummaryRecord& summary, const KeyFactSet& keyfacts,
                                    ChatBackend& backend) const;

    const EvalOptions& options() const { return options_; }

private:
    ChatResponse call(ChatBackend& backend, const std::string& prompt) const;

    const PromptLibrary* prompts_;
    EvalOptions options_;
};

}  // namespace refinery
