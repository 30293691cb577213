#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refinery/feedback.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Pipeline identity
// ---------------------------------------------------------------------------

struct PipelineKind {
    enum class Family { p1, p2, p3, p4, refeed, dcr, acueval };

    Family family = Family::p4;
    Dimension p1_dimension = Dimension::faithfulness;  // meaningful for p1 only

    // "p1-faith", "p1-comp", "p1-conc", "p2", "p3", "p4", "refeed",
    // "dcr", "acueval"
    std::string name() const;
    static PipelineKind from_name(const std::string& name);
    static std::vector<std::string> all_names();

    bool operator==(const PipelineKind&) const = default;
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct RefinementResult {
    SummaryRecord revised;
    std::optional<std::string> reasoning;
    std::vector<std::vector<ChatMessage>> sessions;  // one list per model session
    std::optional<std::vector<std::string>> per_turn;
    PipelineKind pipeline;
    DimOrder order_used = default_order();

    // All session messages flattened in order.
    std::vector<ChatMessage> transcript() const;
};

json refinement_to_json(const RefinementResult& r);
RefinementResult refinement_from_json(const json& j);

// ---------------------------------------------------------------------------
// Execution context
// ---------------------------------------------------------------------------

struct PipelineOptions {
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<int> seed;
    bool stale_labels = false;       // P2: reuse original labels between turns
    std::string system_prompt;       // optional; sent once at session start
};

struct PipelineContext {
    ChatBackend& backend;  // refinement model
    std::string backend_id;
    const PromptLibrary& prompts;
    PipelineOptions options;

    // Label re-evaluation between P2 turns; when either is null the stale
    // path is used regardless of options.stale_labels. The detector also
    // serves as DCR's reasoning backend.
    const Evaluator* evaluator = nullptr;
    ChatBackend* detector = nullptr;
    std::string detector_id;  // backend id for detector calls; empty -> backend_id
};

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

// Text after the last "Revised Summary:" marker, fences stripped.
std::string parse_revised_summary(const std::string& raw);

// Text between the "Feedback Reasoning:" marker and the final
// "Revised Summary:" marker, when both are present.
std::optional<std::string> parse_feedback_reasoning(const std::string& raw);

// Content of the last \boxed{...} span, balanced braces, inner \text{}
// unwrapped.
std::optional<std::string> extract_boxed(const std::string& text);

struct ThinkAnswer {
    std::string reasoning;  // inside <think>...</think>, empty when absent
    std::string revised;    // boxed text from the answer span
};

// Parses reflective output: reasoning from think tags, revised summary from
// the boxed span inside answer tags, falling back to a boxed span anywhere.
ThinkAnswer parse_reflective_output(const std::string& raw);

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

RefinementResult run_p1(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, Dimension target);

// Three fresh single-turn sessions; turn t refines turn t-1's output.
// Labels are re-evaluated between turns unless the stale path applies.
RefinementResult run_p2(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order);

// One growing conversation over three turns.
RefinementResult run_p3(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order);

// Single call with all three instruction lines and feedback blocks in order.
RefinementResult run_p4(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order);

// Single call with the long-thinking system prompt; output parsed from
// think/answer tags and the boxed summary.
RefinementResult run_refeed(const PipelineContext& ctx, const Document& doc,
                            const SummaryRecord& summary, const FeedbackLabels& labels,
                            const KeyFactSet& keyfacts, const DimOrder& order);

// Stage 1: one critique call per faithfulness-flagged sentence on the
// reasoning backend. Stage 2: one refinement call with the concatenated
// critiques as feedback.
RefinementResult run_dcr(const PipelineContext& ctx, ChatBackend& reason_backend,
                         const std::string& reason_backend_id, const Document& doc,
                         const SummaryRecord& summary, const FeedbackLabels& labels);

RefinementResult run_acueval(const PipelineContext& ctx, const Document& doc,
                             const SummaryRecord& summary,
                             const std::vector<std::string>& unsupported_facts);

// Dispatch by kind. DCR reasons on ctx.detector when set, otherwise on the
// refinement backend; ACUEval derives unsupported facts from the
// faithfulness-flagged sentences.
RefinementResult run_pipeline(const PipelineContext& ctx, PipelineKind kind,
                              const Document& doc, const SummaryRecord& summary,
                              const FeedbackLabels& labels, const KeyFactSet& keyfacts,
                              const DimOrder& order);

}  // namespace refinery
