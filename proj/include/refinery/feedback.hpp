#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refinery/evaluator.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Order policies
// ---------------------------------------------------------------------------

struct OrderPolicy {
    enum class Kind { fixed, random_per_sample, last_fixed };

    Kind kind = Kind::fixed;
    DimOrder perm = default_order();             // Kind::fixed
    Dimension last = Dimension::conciseness;     // Kind::last_fixed
    std::uint64_t seed = 0;                      // randomized kinds

    static OrderPolicy fixed_policy(DimOrder order);
    static OrderPolicy random(std::uint64_t seed);
    static OrderPolicy last_fixed(Dimension d, std::uint64_t seed);

    std::string label() const;
};

// Parses "fixed", "fixed:<order>", "random", "last:<dimension>" (also the
// short forms "last-faith" etc.).
OrderPolicy order_policy_from_string(const std::string& text, std::uint64_t seed);

// Pure function of (policy, sample_index): Fixed returns its permutation,
// RandomPerSample draws one of 6 permutations, LastFixed draws one of the 2
// permutations ending in the fixed dimension.
DimOrder choose_order(const OrderPolicy& policy, std::uint64_t sample_index);

// ---------------------------------------------------------------------------
// Labels from evaluation
// ---------------------------------------------------------------------------

// faith[i]=1 iff verdict i is not no_error; comp[j]=1 iff edge j is
// unmatched; conc[i]=1 iff sentence i is cited by no edge.
FeedbackLabels labels_from_eval(const std::vector<FactCheckVerdict>& verdicts,
                                const std::vector<AlignmentEdge>& edges, std::size_t n,
                                std::size_t m);

// Scores implied directly by binary labels (1 - mean of flags).
DimensionScores scores_from_labels(const FeedbackLabels& labels);

// ---------------------------------------------------------------------------
// Feedback text
// ---------------------------------------------------------------------------

struct FeedbackText {
    DimOrder order = default_order();
    std::array<std::string, 3> blocks;  // rendered in `order`

    // Blocks joined by blank lines.
    std::string full() const;
};

// One ***<Dimension> Feedback*** block. Flagged sentences and key facts are
// quoted verbatim; a dimension with nothing flagged renders "- none".
std::string render_dimension_block(Dimension d, const FeedbackLabels& labels,
                                   const SummaryRecord& summary, const KeyFactSet& keyfacts);

FeedbackText render_feedback(const FeedbackLabels& labels, const SummaryRecord& summary,
                             const KeyFactSet& keyfacts, const DimOrder& order);

// ---------------------------------------------------------------------------
// Feedback parsing (round-trip support)
// ---------------------------------------------------------------------------

struct ParsedFeedback {
    std::vector<int> faith_flagged;            // 1-based sentence indices
    std::vector<int> conc_flagged;             // 1-based sentence indices
    std::vector<std::string> missing_contents; // quoted key-fact texts
    std::array<bool, 3> block_present{};       // indexed by Dimension value
    std::vector<Dimension> block_order;        // order of appearance
};

ParsedFeedback parse_feedback_text(const std::string& text);

// ---------------------------------------------------------------------------
// Whole-record evaluation
// ---------------------------------------------------------------------------

struct EvalBundle {
    std::vector<FactCheckVerdict> verdicts;
    std::vector<AlignmentEdge> edges;
    FeedbackLabels labels;
    DimensionScores scores;
    std::vector<std::string> warnings;
};

// Runs fact check + key-fact alignment and derives labels and scores.
EvalBundle evaluate_summary(const Evaluator& evaluator, const Document& doc,
                            const SummaryRecord& summary, const KeyFactSet& keyfacts,
                            ChatBackend& backend);

}  // namespace refinery
