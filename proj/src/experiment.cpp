#include "refinery/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>

namespace refinery {

namespace {

constexpr const char* kHarnessVersion = "0.1.0";

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    };
    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)),
                                                  count);
    if (n_threads <= 1) {
        loop();
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) threads.emplace_back(loop);
    for (auto& t : threads) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

void validate_plan(const ExperimentPlan& plan, const BackendRegistry& registry) {
    if (plan.corpus_path.empty()) throw ConfigError("plan has no corpus path");
    if (plan.pipelines.empty()) throw ConfigError("plan needs at least one pipeline");
    if (plan.feedback_tiers.empty()) throw ConfigError("plan needs at least one feedback tier");
    if (plan.order_policies.empty()) throw ConfigError("plan needs at least one order policy");
    for (const auto& tier : plan.feedback_tiers) {
        if (tier != "high" && tier != "low")
            throw ConfigError("unknown feedback tier: " + tier);
        auto it = plan.detector_backends.find(tier);
        if (it == plan.detector_backends.end())
            throw ConfigError("no detector backend configured for tier: " + tier);
        if (!registry.has(it->second))
            throw ConfigError("unregistered detector backend: " + it->second);
    }
    if (plan.refine_backend.empty() || !registry.has(plan.refine_backend))
        throw ConfigError("unregistered refinement backend: " + plan.refine_backend);
    if (plan.eval_backend.empty() || !registry.has(plan.eval_backend))
        throw ConfigError("unregistered evaluation backend: " + plan.eval_backend);
    if (plan.failure_budget < 0.0 || plan.failure_budget > 1.0)
        throw ConfigError("failure budget must be within [0, 1]");
    if (plan.workers < 1) throw ConfigError("worker count must be at least 1");
}

json plan_to_json(const ExperimentPlan& plan) {
    json j;
    j["corpus"] = plan.corpus_path.string();
    json pipelines = json::array();
    for (const auto& k : plan.pipelines) pipelines.push_back(k.name());
    j["pipelines"] = std::move(pipelines);
    j["feedback_tiers"] = plan.feedback_tiers;
    json policies = json::array();
    for (const auto& p : plan.order_policies) policies.push_back(p.label());
    j["order_policies"] = std::move(policies);
    json detectors = json::object();
    for (const auto& [tier, id] : plan.detector_backends) detectors[tier] = id;
    j["detector_backends"] = std::move(detectors);
    j["refine_backend"] = plan.refine_backend;
    j["eval_backend"] = plan.eval_backend;
    j["seed"] = plan.seed;
    j["temperature"] = plan.temperature;
    j["max_tokens"] = plan.max_tokens;
    j["stale_labels"] = plan.stale_labels;
    j["failure_budget"] = plan.failure_budget;
    return j;
}

// ---------------------------------------------------------------------------
// Outcome serialization
// ---------------------------------------------------------------------------

json outcome_record_to_json(const RecordOutcome& r) {
    json j;
    j["kind"] = "outcome";
    j["doc_id"] = r.doc_id;
    j["summarizer"] = r.summarizer;
    j["pipeline"] = r.pipeline;
    j["tier"] = r.tier;
    j["policy"] = r.policy;
    j["order"] = order_to_string(r.order);
    j["failed"] = r.failed;
    if (r.failed) {
        j["failure"] = r.failure;
    } else {
        j["before"] = scores_to_json(r.before);
        j["labels"] = labels_to_json(r.labels);
        j["revised"] = r.revised;
        j["after"] = scores_to_json(r.after);
    }
    return j;
}

json manifest_to_json(const RunManifest& m) {
    json j;
    j["kind"] = "manifest";
    j["run_id"] = m.run_id;
    j["seed"] = m.seed;
    j["harness_version"] = m.harness_version;
    j["records_total"] = m.records_total;
    j["records_failed"] = m.records_failed;
    j["corpus_documents"] = m.corpus_documents;
    j["corpus_summaries"] = m.corpus_summaries;
    return j;
}

void write_outcome(const ExperimentOutcome& outcome, const std::filesystem::path& path) {
    std::vector<json> lines;
    lines.reserve(outcome.records.size() + 1);
    lines.push_back(manifest_to_json(outcome.manifest));
    for (const auto& r : outcome.records) lines.push_back(outcome_record_to_json(r));
    save_results(lines, path);
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

namespace {

// Per (document, summary) pair: before-scores from the evaluation backend
// and labels per tier from the detectors. Shared by every pipeline and
// order policy so that trials differ only in ordering.
struct PairData {
    bool ok = false;
    std::string error;
    DimensionScores before;
    std::map<std::string, FeedbackLabels> labels;  // tier -> labels
};

struct Unit {
    const CorpusGroup* group = nullptr;
    const SummaryRecord* summary = nullptr;
    std::size_t pair_index = 0;
    PipelineKind kind;
    std::string tier;
    const OrderPolicy* policy = nullptr;
};

}  // namespace

ExperimentOutcome run_experiment(const ExperimentPlan& plan, BackendRegistry& registry,
                                 const PromptLibrary& prompts) {
    validate_plan(plan, registry);
    Corpus corpus = load_corpus(plan.corpus_path);

    EvalOptions eval_options;
    eval_options.backend_id = plan.eval_backend;
    eval_options.max_tokens = plan.max_tokens;
    Evaluator evaluator(prompts, eval_options);
    ChatBackend& eval_backend = registry.get(plan.eval_backend);

    std::map<std::string, Evaluator> detector_evaluators;
    for (const auto& [tier, id] : plan.detector_backends) {
        EvalOptions detector_options;
        detector_options.backend_id = id;
        detector_options.max_tokens = plan.max_tokens;
        detector_evaluators.emplace(tier, Evaluator(prompts, detector_options));
    }

    // Flatten (doc, summary) pairs in corpus order.
    std::vector<std::pair<const CorpusGroup*, const SummaryRecord*>> pairs;
    for (const auto& group : corpus.groups)
        for (const auto& summary : group.summaries) pairs.push_back({&group, &summary});

    // Stage A: shared before-scores and per-tier labels.
    std::vector<PairData> pair_data(pairs.size());
    parallel_for(pairs.size(), plan.workers, [&](std::size_t i) {
        const auto& [group, summary] = pairs[i];
        PairData& data = pair_data[i];
        try {
            if (!group->keyfacts || group->keyfacts->facts.empty())
                throw Error("no key facts for document " + group->doc.id);
            data.before =
                evaluate_summary(evaluator, group->doc, *summary, *group->keyfacts, eval_backend)
                    .scores;
            for (const auto& tier : plan.feedback_tiers) {
                const Evaluator& detector_eval = detector_evaluators.at(tier);
                ChatBackend& detector = registry.get(plan.detector_backends.at(tier));
                data.labels[tier] =
                    evaluate_summary(detector_eval, group->doc, *summary, *group->keyfacts,
                                     detector)
                        .labels;
            }
            data.ok = true;
        } catch (const std::exception& e) {
            data.error = e.what();
        }
    });

    // Stage B: refinement units in corpus order.
    std::vector<Unit> units;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        for (const auto& kind : plan.pipelines)
            for (const auto& tier : plan.feedback_tiers)
                for (const auto& policy : plan.order_policies)
                    units.push_back({pairs[i].first, pairs[i].second, i, kind, tier, &policy});

    ExperimentOutcome outcome;
    outcome.records.resize(units.size());
    parallel_for(units.size(), plan.workers, [&](std::size_t u) {
        const Unit& unit = units[u];
        RecordOutcome& out = outcome.records[u];
        out.doc_id = unit.group->doc.id;
        out.summarizer = unit.summary->summarizer;
        out.pipeline = unit.kind.name();
        out.tier = unit.tier;
        out.policy = unit.policy->label();
        try {
            const PairData& data = pair_data[unit.pair_index];
            if (!data.ok) throw Error(data.error);
            out.before = data.before;
            out.labels = data.labels.at(unit.tier);
            out.order = choose_order(*unit.policy, unit.pair_index);

            PipelineContext ctx{registry.get(plan.refine_backend), plan.refine_backend, prompts,
                                PipelineOptions{}};
            ctx.options.temperature = plan.temperature;
            ctx.options.max_tokens = plan.max_tokens;
            ctx.options.seed = static_cast<int>(plan.seed);
            ctx.options.stale_labels = plan.stale_labels;
            ctx.evaluator = &detector_evaluators.at(unit.tier);
            ctx.detector = &registry.get(plan.detector_backends.at(unit.tier));
            ctx.detector_id = plan.detector_backends.at(unit.tier);

            RefinementResult result = run_pipeline(ctx, unit.kind, unit.group->doc,
                                                   *unit.summary, out.labels,
                                                   *unit.group->keyfacts, out.order);
            out.revised = result.revised.sentences;
            out.order = result.order_used;
            out.after = evaluate_summary(evaluator, unit.group->doc, result.revised,
                                         *unit.group->keyfacts, eval_backend)
                            .scores;
        } catch (const std::exception& e) {
            out.failed = true;
            out.failure = e.what();
        }
    });

    long failed = 0;
    for (const auto& r : outcome.records) failed += r.failed ? 1 : 0;

    RunManifest manifest;
    manifest.seed = plan.seed;
    manifest.harness_version = kHarnessVersion;
    manifest.records_total = static_cast<long>(outcome.records.size());
    manifest.records_failed = failed;
    manifest.corpus_documents = static_cast<long>(corpus.groups.size());
    manifest.corpus_summaries = static_cast<long>(pairs.size());
    manifest.run_id = "run-" + sha256_hex(plan_to_json(plan).dump()).substr(0, 12);
    outcome.manifest = manifest;

    outcome.run_failed =
        !outcome.records.empty() &&
        static_cast<double>(failed) >
            plan.failure_budget * static_cast<double>(outcome.records.size());
    return outcome;
}

// ---------------------------------------------------------------------------
// Trial sweep
// ---------------------------------------------------------------------------

std::vector<TrialMatrix> trial_sweep(const ExperimentPlan& plan,
                                     const std::vector<OrderPolicy>& trials,
                                     BackendRegistry& registry, const PromptLibrary& prompts) {
    if (trials.empty()) throw ConfigError("trial sweep needs at least one order policy");
    ExperimentPlan sweep_plan = plan;
    sweep_plan.order_policies = trials;
    ExperimentOutcome outcome = run_experiment(sweep_plan, registry, prompts);

    std::vector<TrialMatrix> matrices;
    for (const auto& kind : plan.pipelines) {
        for (const auto& tier : plan.feedback_tiers) {
            TrialMatrix matrix;
            matrix.pipeline = kind.name();
            matrix.tier = tier;
            for (const auto& policy : trials) {
                const std::string label = policy.label();
                ScoreSeries fa{label + "/faithfulness", {}, {}};
                ScoreSeries cm{label + "/completeness", {}, {}};
                ScoreSeries cn{label + "/conciseness", {}, {}};
                for (const auto& r : outcome.records) {
                    if (r.failed || r.pipeline != kind.name() || r.tier != tier ||
                        r.policy != label)
                        continue;
                    const std::string id = r.doc_id + "/" + r.summarizer;
                    fa.ids.push_back(id);
                    cm.ids.push_back(id);
                    cn.ids.push_back(id);
                    fa.values.push_back(r.after.faithfulness);
                    cm.values.push_back(r.after.completeness);
                    cn.values.push_back(r.after.conciseness);
                }
                matrix.trials.push_back(make_trial_summary(label, fa, cm, cn));
            }
            std::vector<double> fa_means, cm_means, cn_means;
            for (const auto& t : matrix.trials) {
                fa_means.push_back(t.faithfulness);
                cm_means.push_back(t.completeness);
                cn_means.push_back(t.conciseness);
            }
            matrix.max_min_faithfulness = max_min(fa_means);
            matrix.max_min_completeness = max_min(cm_means);
            matrix.max_min_conciseness = max_min(cn_means);
            matrices.push_back(std::move(matrix));
        }
    }
    return matrices;
}

// ---------------------------------------------------------------------------
// Report rows
// ---------------------------------------------------------------------------

std::vector<ReportRow> outcome_report_rows(const ExperimentOutcome& outcome,
                                           const BootstrapOptions& bootstrap) {
    std::vector<std::string> pipeline_order;
    for (const auto& r : outcome.records)
        if (std::find(pipeline_order.begin(), pipeline_order.end(), r.pipeline) ==
            pipeline_order.end())
            pipeline_order.push_back(r.pipeline);

    std::vector<ReportRow> rows;
    for (const auto& pipeline : pipeline_order) {
        struct DimSeries {
            ScoreSeries before, after;
        };
        std::array<DimSeries, 4> dims;  // faith, comp, conc, composite
        for (const auto& r : outcome.records) {
            if (r.failed || r.pipeline != pipeline) continue;
            const std::string id = r.doc_id + "/" + r.summarizer + "/" + r.tier + "/" + r.policy;
            const std::array<std::pair<double, double>, 4> values{
                std::pair<double, double>{r.before.faithfulness, r.after.faithfulness},
                {r.before.completeness, r.after.completeness},
                {r.before.conciseness, r.after.conciseness},
                {r.before.composite(), r.after.composite()}};
            for (std::size_t d = 0; d < 4; ++d) {
                dims[d].before.ids.push_back(id);
                dims[d].before.values.push_back(values[d].first);
                dims[d].after.ids.push_back(id);
                dims[d].after.values.push_back(values[d].second);
            }
        }
        static const std::array<const char*, 4> names{"faithfulness", "completeness",
                                                      "conciseness", "average"};
        for (std::size_t d = 0; d < 4; ++d) {
            if (dims[d].before.values.empty()) continue;
            ReportRow row;
            row.pipeline = pipeline;
            row.dimension = names[d];
            row.before = 100.0 * mean_fraction(dims[d].before);
            row.after = 100.0 * mean_fraction(dims[d].after);
            if (dims[d].before.values.size() >= 2)
                row.p_value =
                    paired_bootstrap(dims[d].before, dims[d].after, bootstrap).p_value;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace refinery
