#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refinery/feedback.hpp"
#include "refinery/pipeline.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Candidate summaries
// ---------------------------------------------------------------------------

struct Candidate {
    std::string summarizer_id;
    SummaryRecord summary;
    DimensionScores scores;
    FeedbackLabels labels;
    bool scored = false;
};

struct FilterVerdict {
    enum class Stage { format, verification };

    Stage stage = Stage::format;
    bool passed = false;
    std::string reason;  // non-empty whenever passed is false
};

struct CandidateSet {
    std::string doc_id;
    std::vector<Candidate> candidates;
    // (summarizer_id, verdict) for candidates dropped before scoring.
    std::vector<std::pair<std::string, FilterVerdict>> drops;
};

// One summary per backend via the JSON summary-generation prompt. A backend
// whose output cannot be parsed is dropped with a recorded verdict rather
// than failing the document.
CandidateSet generate_summaries(
    const PromptLibrary& prompts, const Document& doc,
    const std::vector<std::pair<std::string, std::shared_ptr<ChatBackend>>>& backends,
    const PipelineOptions& options = {});

// Scores every candidate with the evaluator; candidates whose evaluator
// output cannot be parsed are moved to drops.
CandidateSet collect_initial_feedback(const Evaluator& evaluator, CandidateSet set,
                                      const Document& doc, const KeyFactSet& keyfacts,
                                      ChatBackend& detector);

// Argmax of the composite score; ties keep the earliest candidate.
// Requires at least one scored candidate.
std::pair<std::string, SummaryRecord> select_best_summary(const CandidateSet& set);

// ---------------------------------------------------------------------------
// Teacher reasoning
// ---------------------------------------------------------------------------

struct ReasoningSample {
    std::string doc_id;
    std::string summarizer;
    std::string document;       // source text, carried for emission
    SummaryRecord summary;
    FeedbackLabels feedback_labels;
    std::array<std::string, 3> feedback_blocks;  // rendered, indexed by Dimension
    std::string best_summary;
    std::string reasoning;
    std::string revised;
    std::string raw;            // full teacher output
    long token_count = 0;       // reasoning tokens
    DimOrder order_used = default_order();
    DimensionScores before;     // initial-feedback scores of `summary`
    std::string tier;           // feedback-quality tier label
};

// Sends the guideline prompt (reflective: with the ideal summary and the
// four factual-error types; receptive: without either) and parses the
// teacher output into reasoning + boxed revised summary. Unparseable
// output leaves `revised` empty for the format filter to reject.
ReasoningSample generate_reasoning(const PromptLibrary& prompts, const Document& doc,
                                   const Candidate& candidate, const KeyFactSet& keyfacts,
                                   const std::string& best_summary, const DimOrder& order,
                                   ChatBackend& teacher, const std::string& teacher_id,
                                   InstructionStyle style = InstructionStyle::reflective_with_error_types,
                                   const PipelineOptions& options = {});

// Splits raw teacher output into (reasoning, revised). Accepts both bare
// "**Final Revised Summary**: \[ \boxed{...} \]" outputs and fully
// think/answer-wrapped ones.
ThinkAnswer parse_teacher_output(const std::string& raw);

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

// Pass iff the output is well formed (non-empty reasoning and revised
// summary) and the reasoning stays within token_cap tokens.
FilterVerdict format_filter(const ReasoningSample& sample, long token_cap = 5000);

// Pass iff after.faithfulness = 1, after.completeness >= 0.5,
// after.conciseness >= 0.5, and every dimension improved or held
// (strictly improved when strict_delta).
FilterVerdict verification_filter(const DimensionScores& before, const DimensionScores& after,
                                  bool strict_delta = false);

// ---------------------------------------------------------------------------
// Training records
// ---------------------------------------------------------------------------

struct TrainingRecord {
    std::string system;
    std::string user;
    std::string assistant;
    json meta = json::object();
};

// {"messages":[system,user,assistant], "meta":{...}}
json training_record_to_json(const TrainingRecord& r);

void write_training_records(const std::vector<TrainingRecord>& records,
                            const std::filesystem::path& path);

// Wraps reasoning in think tags and the boxed revised summary in answer
// tags, matching the trained output contract.
std::string wrap_assistant_output(const std::string& reasoning, const std::string& revised);

// One record per sample. The user prompt never includes the ideal summary
// or the error-type definitions; with shuffle_orders the feedback order is
// re-drawn per sample from the seed, otherwise the default order is used.
std::vector<TrainingRecord> emit_training_records(const PromptLibrary& prompts,
                                                  const std::vector<ReasoningSample>& samples,
                                                  InstructionStyle style, bool shuffle_orders,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stage ledger
// ---------------------------------------------------------------------------

struct StageLedger {
    std::string pipeline;
    std::string strategy;  // "Reflective" / "Receptive"
    std::string tier;
    long original = 0;
    long format_passed = 0;
    long verification_passed = 0;

    // verification / format as a percentage with 2 decimals; "—" when the
    // format stage passed nothing.
    std::string ratio_string() const;
};

// Pipe-delimited table with the standard column set.
std::string ledger_table(const std::vector<StageLedger>& rows);

// ---------------------------------------------------------------------------
// Dataset drivers
// ---------------------------------------------------------------------------

struct DatabuildOptions {
    PipelineOptions call;               // temperature / max_tokens / seed for model calls
    long token_cap = 5000;
    bool strict_delta = false;
    bool shuffle_orders = true;
    std::uint64_t shuffle_seed = 0;
    std::string tier = "high";
    DimOrder teacher_order = default_order();
};

struct DatabuildContext {
    const PromptLibrary& prompts;
    const Evaluator& evaluator;
    ChatBackend& teacher;
    std::string teacher_id;
    ChatBackend& detector;
    std::string detector_id;
};

struct DatasetBuildReport {
    std::vector<TrainingRecord> records;
    std::vector<ReasoningSample> passing;
    StageLedger ledger;
    // "doc_id/summarizer" -> verdict for every rejected sample.
    std::vector<std::pair<std::string, FilterVerdict>> rejects;
};

// Reflective (long-thinking) dataset: per document, score all summaries,
// pick the best as the goal, collect teacher reasoning for every scored
// candidate, filter, and emit.
DatasetBuildReport build_dataset(const DatabuildContext& ctx, const Corpus& corpus,
                                 const DatabuildOptions& options = {});

// Receptive variant: same staging and filters, teacher prompt without the
// ideal summary or backtracking guidelines.
DatasetBuildReport build_p4ft_dataset(const DatabuildContext& ctx, const Corpus& corpus,
                                      const DatabuildOptions& options = {});

}  // namespace refinery
