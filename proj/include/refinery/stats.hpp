#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refinery/core.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Series and summaries
// ---------------------------------------------------------------------------

// Per-record score fractions, aligned by record id across paired series.
struct ScoreSeries {
    std::string label;
    std::vector<std::string> ids;
    std::vector<double> values;  // fractions in [0, 1]
};

// Half-up rounding to one decimal (2.25 -> 2.3, -2.25 -> -2.3).
double round1(double v);

// Raw arithmetic mean of the fractions; empty series -> error.
double mean_fraction(const ScoreSeries& series);

// 100 x mean, rounded half-up to one decimal.
double mean_scores(const ScoreSeries& series);

// Per-dimension means as percentages. The raw_* fields keep full precision;
// the display fields are rounded to one decimal. The average always comes
// from the unrounded means.
struct TrialSummary {
    std::string label;
    double faithfulness = 0;
    double completeness = 0;
    double conciseness = 0;
    double average = 0;
    double raw_faithfulness = 0;
    double raw_completeness = 0;
    double raw_conciseness = 0;
    double raw_average = 0;
};

TrialSummary make_trial_summary(const std::string& label, const ScoreSeries& faith,
                                const ScoreSeries& comp, const ScoreSeries& conc);

// Builds a summary directly from percentage values (e.g. published numbers).
TrialSummary trial_from_percentages(const std::string& label, double faith, double comp,
                                    double conc);

// ---------------------------------------------------------------------------
// Deltas and gaps
// ---------------------------------------------------------------------------

struct DeltaRow {
    double faithfulness = 0;  // rounded, sign-preserving
    double completeness = 0;
    double conciseness = 0;
    double average = 0;
};

// after - before per dimension, computed on the unrounded means and rounded
// half-up to one decimal.
DeltaRow delta_row(const TrialSummary& before, const TrialSummary& after);

// "+4.7" / "-0.5" / "+0.0" with one decimal.
std::string format_signed(double v);

// max - min of the trial means, rounded to one decimal; empty -> error.
double max_min(const std::vector<double>& trial_means);

// ---------------------------------------------------------------------------
// Paired bootstrap
// ---------------------------------------------------------------------------

struct SignificanceResult {
    double p_value = 1.0;
    bool significant = false;  // p_value < 0.05
    long resamples = 0;
    std::uint64_t seed = 0;
};

struct BootstrapOptions {
    long resamples = 10000;
    std::uint64_t seed = 0;
    // Enumerates all n^n index tuples instead of sampling; requires n <= 8.
    bool exhaustive = false;
};

// Two-sided paired bootstrap on d_i = treatment_i - baseline_i: q is the
// fraction of resampled means on the far side of zero from the observed
// mean (non-strict), p = min(1, 2q). Deterministic in the seed.
SignificanceResult paired_bootstrap(const ScoreSeries& baseline, const ScoreSeries& treatment,
                                    const BootstrapOptions& options = {});

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string pipeline;
    std::string dimension;  // "faithfulness" / "completeness" / "conciseness" / "average"
    double before = 0;      // unrounded percentages
    double after = 0;
    std::optional<double> p_value;
};

enum class TableFormat { markdown, csv };

// Markdown: one row per pipeline, one column per dimension, cells like
// "82.7* (+4.7)" (star iff p < 0.05). CSV: raw numerics with columns
// pipeline,dimension,before,after,delta,p_value,significant.
std::string emit_table(const std::vector<ReportRow>& rows, TableFormat format);

}  // namespace refinery
