#pragma once

#include <map>
#include <string>
#include <vector>

#include "refinery/databuild.hpp"
#include "refinery/stats.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

struct ExperimentPlan {
    std::filesystem::path corpus_path;
    std::vector<PipelineKind> pipelines;
    std::vector<std::string> feedback_tiers;              // subset of {"high","low"}
    std::vector<OrderPolicy> order_policies;
    std::map<std::string, std::string> detector_backends;  // tier -> backend id
    std::string refine_backend;
    std::string eval_backend;  // after/before scoring, distinct from detectors
    std::uint64_t seed = 0;
    double temperature = 0.0;
    int max_tokens = 2048;
    bool stale_labels = false;
    double failure_budget = 0.05;  // fraction of failed records tolerated
    int workers = 4;
};

// Structural validation; backend ids are checked against the registry.
void validate_plan(const ExperimentPlan& plan, const BackendRegistry& registry);

json plan_to_json(const ExperimentPlan& plan);

// ---------------------------------------------------------------------------
// Outcomes
// ---------------------------------------------------------------------------

struct RecordOutcome {
    std::string doc_id;
    std::string summarizer;
    std::string pipeline;
    std::string tier;
    std::string policy;  // order policy label
    DimOrder order = default_order();
    DimensionScores before;
    FeedbackLabels labels;
    std::vector<std::string> revised;
    DimensionScores after;
    bool failed = false;
    std::string failure;
};

json outcome_record_to_json(const RecordOutcome& r);

struct RunManifest {
    std::string run_id;  // derived from the plan digest and seed
    std::uint64_t seed = 0;
    std::string harness_version;
    long records_total = 0;
    long records_failed = 0;
    long corpus_documents = 0;
    long corpus_summaries = 0;
};

json manifest_to_json(const RunManifest& m);

struct ExperimentOutcome {
    RunManifest manifest;
    std::vector<RecordOutcome> records;  // corpus order x pipeline x tier x policy
    bool run_failed = false;             // failure budget exceeded
};

// Manifest line first, then one line per record.
void write_outcome(const ExperimentOutcome& outcome, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

// Full sweep: per record, detect labels with the tier's detector, draw the
// order, refine, and score before/after with the evaluation backend.
// Failures are isolated per record; the run is marked failed only when the
// failed fraction exceeds the budget.
ExperimentOutcome run_experiment(const ExperimentPlan& plan, BackendRegistry& registry,
                                 const PromptLibrary& prompts);

struct TrialMatrix {
    std::string pipeline;
    std::string tier;
    std::vector<TrialSummary> trials;  // after-score means per policy
    double max_min_faithfulness = 0;
    double max_min_completeness = 0;
    double max_min_conciseness = 0;
};

// One run covering every policy so detector labels are computed once and
// shared; Max-Min per dimension across the per-policy means.
std::vector<TrialMatrix> trial_sweep(const ExperimentPlan& plan,
                                     const std::vector<OrderPolicy>& trials,
                                     BackendRegistry& registry, const PromptLibrary& prompts);

// Report rows (per pipeline x dimension, averaged over tiers and policies)
// with paired bootstrap significance against the before-scores.
std::vector<ReportRow> outcome_report_rows(const ExperimentOutcome& outcome,
                                           const BootstrapOptions& bootstrap = {});

}  // namespace refinery
