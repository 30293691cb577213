#include "refinery/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>

#include "refinery/rng.hpp"

namespace refinery {

double round1(double v) {
    double scaled = std::floor(std::fabs(v) * 10.0 + 0.5) / 10.0;
    double r = v < 0 ? -scaled : scaled;
    if (r == 0) r = 0;  // normalize -0.0
    return r;
}

double mean_fraction(const ScoreSeries& series) {
    if (series.values.empty()) throw Error("mean of an empty score series");
    double sum = 0;
    for (double v : series.values) sum += v;
    return sum / static_cast<double>(series.values.size());
}

double mean_scores(const ScoreSeries& series) { return round1(100.0 * mean_fraction(series)); }

TrialSummary make_trial_summary(const std::string& label, const ScoreSeries& faith,
                                const ScoreSeries& comp, const ScoreSeries& conc) {
    TrialSummary t;
    t.label = label;
    t.raw_faithfulness = 100.0 * mean_fraction(faith);
    t.raw_completeness = 100.0 * mean_fraction(comp);
    t.raw_conciseness = 100.0 * mean_fraction(conc);
    t.raw_average = (t.raw_faithfulness + t.raw_completeness + t.raw_conciseness) / 3.0;
    t.faithfulness = round1(t.raw_faithfulness);
    t.completeness = round1(t.raw_completeness);
    t.conciseness = round1(t.raw_conciseness);
    t.average = round1(t.raw_average);
    return t;
}

TrialSummary trial_from_percentages(const std::string& label, double faith, double comp,
                                    double conc) {
    TrialSummary t;
    t.label = label;
    t.raw_faithfulness = faith;
    t.raw_completeness = comp;
    t.raw_conciseness = conc;
    t.raw_average = (faith + comp + conc) / 3.0;
    t.faithfulness = round1(faith);
    t.completeness = round1(comp);
    t.conciseness = round1(conc);
    t.average = round1(t.raw_average);
    return t;
}

DeltaRow delta_row(const TrialSummary& before, const TrialSummary& after) {
    DeltaRow d;
    d.faithfulness = round1(after.raw_faithfulness - before.raw_faithfulness);
    d.completeness = round1(after.raw_completeness - before.raw_completeness);
    d.conciseness = round1(after.raw_conciseness - before.raw_conciseness);
    d.average = round1(after.raw_average - before.raw_average);
    return d;
}

std::string format_signed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.1f", round1(v));
    return buf;
}

double max_min(const std::vector<double>& trial_means) {
    if (trial_means.empty()) throw Error("max-min over an empty trial list");
    auto [lo, hi] = std::minmax_element(trial_means.begin(), trial_means.end());
    return round1(*hi - *lo);
}

// ---------------------------------------------------------------------------
// Paired bootstrap
// ---------------------------------------------------------------------------

namespace {

std::vector<double> paired_differences(const ScoreSeries& baseline,
                                       const ScoreSeries& treatment) {
    if (baseline.values.size() != treatment.values.size())
        throw Error("paired bootstrap requires equal-length series");
    if (baseline.values.size() < 2)
        throw Error("paired bootstrap requires at least 2 records");
    if (!baseline.ids.empty() && !treatment.ids.empty() && baseline.ids != treatment.ids)
        throw Error("paired bootstrap requires record-aligned series (id mismatch)");
    std::vector<double> d(baseline.values.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = treatment.values[i] - baseline.values[i];
    return d;
}

// Counts crossings over every index tuple by depth-first enumeration of
// running sums.
long exhaustive_count(const std::vector<double>& d, bool positive_mean) {
    const std::size_t n = d.size();
    long crossings = 0;
    std::vector<std::size_t> idx(n, 0);
    while (true) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += d[idx[i]];
        if (positive_mean ? sum <= 0 : sum >= 0) ++crossings;
        std::size_t k = 0;
        while (k < n && ++idx[k] == n) {
            idx[k] = 0;
            ++k;
        }
        if (k == n) break;
    }
    return crossings;
}

}  // namespace

SignificanceResult paired_bootstrap(const ScoreSeries& baseline, const ScoreSeries& treatment,
                                    const BootstrapOptions& options) {
    const std::vector<double> d = paired_differences(baseline, treatment);
    const std::size_t n = d.size();

    double observed = 0;
    for (double v : d) observed += v;
    const bool positive_mean = observed > 0;

    SignificanceResult result;
    result.seed = options.seed;

    long crossings = 0;
    long total = 0;
    if (options.exhaustive) {
        if (n > 8) throw Error("exhaustive bootstrap limited to n <= 8");
        total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= static_cast<long>(n);
        crossings = exhaustive_count(d, positive_mean);
    } else {
        if (options.resamples <= 0) throw Error("bootstrap resample count must be positive");
        total = options.resamples;
        for (long b = 0; b < total; ++b) {
            CounterRng rng(options.seed, static_cast<std::uint64_t>(b));
            double sum = 0;
            for (std::size_t i = 0; i < n; ++i) sum += d[rng.below(n)];
            if (positive_mean ? sum <= 0 : sum >= 0) ++crossings;
        }
    }

    result.resamples = total;
    result.p_value = std::min(1.0, 2.0 * static_cast<double>(crossings) /
                                       static_cast<double>(total));
    result.significant = result.p_value < 0.05;
    return result;
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

namespace {

int dimension_column(const std::string& dimension) {
    if (dimension == "faithfulness") return 0;
    if (dimension == "completeness") return 1;
    if (dimension == "conciseness") return 2;
    if (dimension == "average") return 3;
    throw Error("unknown report dimension: " + dimension);
}

std::string one_decimal(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", round1(v));
    return buf;
}

std::string markdown_cell(const ReportRow& row) {
    std::string cell = one_decimal(row.after);
    if (row.p_value && *row.p_value < 0.05) cell += "*";
    if (row.before != row.after || row.p_value)
        cell += " (" + format_signed(row.after - row.before) + ")";
    return cell;
}

std::string csv_number(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

}  // namespace

std::string emit_table(const std::vector<ReportRow>& rows, TableFormat format) {
    if (format == TableFormat::csv) {
        std::ostringstream out;
        out << "pipeline,dimension,before,after,delta,p_value,significant\n";
        for (const auto& r : rows) {
            out << r.pipeline << "," << r.dimension << "," << csv_number(r.before) << ","
                << csv_number(r.after) << "," << csv_number(r.after - r.before) << ",";
            if (r.p_value)
                out << csv_number(*r.p_value) << "," << (*r.p_value < 0.05 ? "true" : "false");
            else
                out << ",";
            out << "\n";
        }
        return out.str();
    }

    // Markdown: pipelines as rows in first-appearance order.
    std::vector<std::string> order;
    std::map<std::string, std::array<std::string, 4>> cells;
    for (const auto& r : rows) {
        if (!cells.count(r.pipeline)) {
            order.push_back(r.pipeline);
            cells[r.pipeline] = {"", "", "", ""};
        }
        cells[r.pipeline][static_cast<std::size_t>(dimension_column(r.dimension))] =
            markdown_cell(r);
    }
    std::ostringstream out;
    out << "| Pipeline | Faith. | Comp. | Conc. | Avg. |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& pipeline : order) {
        const auto& c = cells[pipeline];
        out << "| " << pipeline;
        for (const auto& cell : c) out << " | " << (cell.empty() ? "—" : cell);
        out << " |\n";
    }
    return out.str();
}

}  // namespace refinery
