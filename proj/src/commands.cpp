#include "refinery/commands.hpp"

#include <fstream>
#include <iostream>
#include <random>

namespace refinery {

namespace {

std::uint64_t draw_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string resolve_corpus(const ConfigFile& config, const std::string& override_path) {
    if (!override_path.empty()) return override_path;
    if (config.has("corpus", "path")) return config.get("corpus", "path");
    throw ConfigError("no corpus path given (use --corpus or a [corpus] path entry)");
}

std::string role_backend(const ConfigFile& config, const std::string& key) {
    if (config.has("roles", key)) return config.get("roles", key);
    throw ConfigError("no [roles] " + key + " backend configured");
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + path.string());
    out << content;
}

}  // namespace

std::string pipeline_help_line() {
    std::string line;
    for (const auto& name : PipelineKind::all_names())
        line += (line.empty() ? "" : ", ") + name;
    return line;
}

std::string order_policy_help_line() {
    return "fixed, fixed:<order> (e.g. fixed:conc,comp,faith), random, last:<dimension>";
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const EvaluateArgs& args) {
    try {
        ConfigFile config = parse_config_file(args.config_path);
        CliDefaults defaults = defaults_from_config(config);
        BackendRegistry registry = build_registry(config);
        Corpus corpus = load_corpus(resolve_corpus(config, args.corpus));

        std::string backend_id = args.backend;
        if (backend_id.empty())
            backend_id = config.get_or("roles", "detector.high",
                                       config.get_or("roles", "eval", ""));
        if (backend_id.empty())
            throw ConfigError("no evaluation backend (use --backend or [roles] entries)");
        if (!registry.has(backend_id))
            throw ConfigError("unregistered backend: " + backend_id);

        EvalOptions options;
        options.backend_id = backend_id;
        options.temperature = defaults.temperature;
        options.max_tokens = defaults.max_tokens;
        static PromptLibrary prompts;
        Evaluator evaluator(prompts, options);
        ChatBackend& backend = registry.get(backend_id);

        std::vector<json> results;
        long failures = 0;
        for (const auto& group : corpus.groups) {
            for (const auto& summary : group.summaries) {
                try {
                    if (!group.keyfacts || group.keyfacts->facts.empty())
                        throw Error("no key facts for document " + group.doc.id);
                    EvalBundle bundle =
                        evaluate_summary(evaluator, group.doc, summary, *group.keyfacts, backend);
                    json record;
                    record["kind"] = "evaluation";
                    record["doc_id"] = group.doc.id;
                    record["summarizer"] = summary.summarizer;
                    record["labels"] = labels_to_json(bundle.labels);
                    record["scores"] = scores_to_json(bundle.scores);
                    if (!bundle.warnings.empty()) record["warnings"] = bundle.warnings;
                    results.push_back(std::move(record));
                } catch (const std::exception& e) {
                    ++failures;
                    std::cerr << "evaluate: " << group.doc.id << "/" << summary.summarizer
                              << ": " << e.what() << "\n";
                }
            }
        }
        save_results(results, args.out);
        if (failures == 0) return kExitOk;
        return results.empty() ? kExitFatal : kExitPartial;
    } catch (const std::exception& e) {
        std::cerr << "evaluate: " << e.what() << "\n";
        return kExitFatal;
    }
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

int cmd_refine(const RefineArgs& args) {
    try {
        ConfigFile config = parse_config_file(args.config_path);
        CliDefaults defaults = defaults_from_config(config);
        BackendRegistry registry = build_registry(config);
        Corpus corpus = load_corpus(resolve_corpus(config, args.corpus));
        static PromptLibrary prompts;

        PipelineKind kind = PipelineKind::from_name(args.pipeline);
        std::uint64_t seed = args.seed_set ? args.seed : draw_seed();
        if (!args.seed_set) std::cerr << "refine: selected seed " << seed << "\n";
        OrderPolicy policy = order_policy_from_string(args.order_policy, seed);

        const std::string refine_id = role_backend(config, "refine");
        if (!registry.has(refine_id)) throw ConfigError("unregistered backend: " + refine_id);
        std::string detector_id = config.get_or("roles", "detector.high",
                                                config.get_or("roles", "eval", ""));
        if (detector_id.empty() && args.labels.empty())
            throw ConfigError("no detector backend and no --labels file");

        // Pre-computed labels, when supplied.
        std::map<std::string, FeedbackLabels> label_map;
        if (!args.labels.empty()) {
            for (const auto& j : read_jsonl(args.labels)) {
                if (j.value("kind", "") != "evaluation") continue;
                label_map[j.at("doc_id").get<std::string>() + "/" +
                          j.at("summarizer").get<std::string>()] =
                    labels_from_json(j.at("labels"));
            }
        }

        EvalOptions detector_options;
        detector_options.backend_id = detector_id;
        detector_options.temperature = defaults.temperature;
        detector_options.max_tokens = defaults.max_tokens;
        Evaluator detector_eval(prompts, detector_options);

        std::vector<json> results;
        json manifest;
        manifest["kind"] = "manifest";
        manifest["seed"] = seed;
        manifest["pipeline"] = kind.name();
        manifest["policy"] = policy.label();
        results.push_back(std::move(manifest));

        long failures = 0;
        std::size_t pair_index = 0;
        long written = 0;
        for (const auto& group : corpus.groups) {
            for (const auto& summary : group.summaries) {
                const std::size_t index = pair_index++;
                try {
                    if (!group.keyfacts || group.keyfacts->facts.empty())
                        throw Error("no key facts for document " + group.doc.id);
                    FeedbackLabels labels;
                    auto it = label_map.find(group.doc.id + "/" + summary.summarizer);
                    if (it != label_map.end()) {
                        labels = it->second;
                    } else if (!detector_id.empty() && registry.has(detector_id)) {
                        labels = evaluate_summary(detector_eval, group.doc, summary,
                                                  *group.keyfacts, registry.get(detector_id))
                                     .labels;
                    } else {
                        throw Error("no labels available for " + group.doc.id + "/" +
                                    summary.summarizer);
                    }

                    PipelineContext ctx{registry.get(refine_id), refine_id, prompts,
                                        PipelineOptions{}};
                    ctx.options.temperature = defaults.temperature;
                    ctx.options.max_tokens = defaults.max_tokens;
                    ctx.options.seed = static_cast<int>(seed);
                    ctx.options.stale_labels = args.stale_labels;
                    if (!detector_id.empty() && registry.has(detector_id)) {
                        ctx.evaluator = &detector_eval;
                        ctx.detector = &registry.get(detector_id);
                        ctx.detector_id = detector_id;
                    }

                    DimOrder order = choose_order(policy, index);
                    RefinementResult result = run_pipeline(ctx, kind, group.doc, summary,
                                                           labels, *group.keyfacts, order);
                    results.push_back(refinement_to_json(result));
                    ++written;
                } catch (const std::exception& e) {
                    ++failures;
                    std::cerr << "refine: " << group.doc.id << "/" << summary.summarizer
                              << ": " << e.what() << "\n";
                }
            }
        }
        save_results(results, args.out);
        if (failures == 0) return kExitOk;
        return written == 0 ? kExitFatal : kExitPartial;
    } catch (const std::exception& e) {
        std::cerr << "refine: " << e.what() << "\n";
        return kExitFatal;
    }
}

// ---------------------------------------------------------------------------
// build-dataset
// ---------------------------------------------------------------------------

int cmd_build_dataset(const BuildDatasetArgs& args) {
    try {
        ConfigFile config = parse_config_file(args.config_path);
        CliDefaults defaults = defaults_from_config(config);
        BackendRegistry registry = build_registry(config);
        Corpus corpus = load_corpus(resolve_corpus(config, args.corpus));
        static PromptLibrary prompts;

        if (args.strategy != "reflective" && args.strategy != "receptive")
            throw ConfigError("unknown strategy: " + args.strategy +
                              " (valid: reflective, receptive)");
        if (args.feedback_tier != "high" && args.feedback_tier != "low")
            throw ConfigError("unknown feedback tier: " + args.feedback_tier +
                              " (valid: high, low)");

        std::string teacher_id = config.get_or("roles", "teacher", "");
        if (teacher_id.empty()) teacher_id = role_backend(config, "refine");
        const std::string detector_id = role_backend(config, "detector." + args.feedback_tier);
        for (const auto& id : {teacher_id, detector_id})
            if (!registry.has(id)) throw ConfigError("unregistered backend: " + id);

        std::uint64_t seed = args.seed_set ? args.seed : draw_seed();
        if (!args.seed_set) std::cerr << "build-dataset: selected seed " << seed << "\n";

        EvalOptions detector_options;
        detector_options.backend_id = detector_id;
        detector_options.temperature = defaults.temperature;
        detector_options.max_tokens = defaults.max_tokens;
        Evaluator evaluator(prompts, detector_options);

        DatabuildContext ctx{prompts,   evaluator,
                             registry.get(teacher_id), teacher_id,
                             registry.get(detector_id), detector_id};
        DatabuildOptions options;
        options.call.temperature = defaults.temperature;
        options.call.max_tokens = defaults.max_tokens;
        options.token_cap = args.token_cap;
        options.strict_delta = args.strict_delta;
        options.shuffle_orders = !args.no_shuffle;
        options.shuffle_seed = seed;
        options.tier = args.feedback_tier;

        DatasetBuildReport report = args.strategy == "receptive"
                                        ? build_p4ft_dataset(ctx, corpus, options)
                                        : build_dataset(ctx, corpus, options);
        write_training_records(report.records, args.out);
        const std::string table = ledger_table({report.ledger});
        if (args.ledger_out.empty())
            std::cout << table;
        else
            write_text(args.ledger_out, table);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "build-dataset: " << e.what() << "\n";
        return kExitFatal;
    }
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

int cmd_experiment(const ExperimentArgs& args) {
    try {
        ConfigFile config = parse_config_file(args.config_path);
        CliDefaults defaults = defaults_from_config(config);
        BackendRegistry registry = build_registry(config);
        static PromptLibrary prompts;

        ExperimentPlan plan = plan_from_config(config);
        if (args.seed_set) {
            plan.seed = args.seed;
        } else if (!config.has("experiment", "seed")) {
            plan.seed = draw_seed();
            std::cerr << "experiment: selected seed " << plan.seed << "\n";
        }
        for (auto& policy : plan.order_policies) policy.seed = plan.seed;

        ExperimentOutcome outcome = run_experiment(plan, registry, prompts);

        const std::filesystem::path out_dir =
            args.out_dir.empty() ? defaults.output_dir : args.out_dir;
        write_outcome(outcome, out_dir / "outcome.jsonl");
        BootstrapOptions bootstrap;
        bootstrap.seed = plan.seed;
        auto rows = outcome_report_rows(outcome, bootstrap);
        write_text(out_dir / "report.md", emit_table(rows, TableFormat::markdown));
        write_text(out_dir / "report.csv", emit_table(rows, TableFormat::csv));

        std::cout << "run " << outcome.manifest.run_id << ": "
                  << outcome.manifest.records_total << " records, "
                  << outcome.manifest.records_failed << " failed\n";
        if (outcome.run_failed) {
            std::cerr << "experiment: failure budget exceeded\n";
            return kExitFatal;
        }
        return outcome.manifest.records_failed > 0 ? kExitPartial : kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "experiment: " << e.what() << "\n";
        return kExitFatal;
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const ReportArgs& args) {
    try {
        TableFormat format;
        if (args.format == "markdown" || args.format == "md")
            format = TableFormat::markdown;
        else if (args.format == "csv")
            format = TableFormat::csv;
        else
            throw ConfigError("unknown report format: " + args.format +
                              " (valid: markdown, csv)");

        ExperimentOutcome outcome;
        for (const auto& j : read_jsonl(args.outcome)) {
            const std::string kind = j.value("kind", "");
            if (kind == "manifest") {
                outcome.manifest.run_id = j.value("run_id", "");
                outcome.manifest.seed = j.value("seed", std::uint64_t{0});
                continue;
            }
            if (kind != "outcome") continue;
            RecordOutcome r;
            r.doc_id = j.at("doc_id").get<std::string>();
            r.summarizer = j.value("summarizer", "");
            r.pipeline = j.at("pipeline").get<std::string>();
            r.tier = j.value("tier", "");
            r.policy = j.value("policy", "");
            r.failed = j.value("failed", false);
            if (!r.failed) {
                r.before = scores_from_json(j.at("before"));
                r.after = scores_from_json(j.at("after"));
            }
            outcome.records.push_back(std::move(r));
        }

        BootstrapOptions bootstrap;
        bootstrap.resamples = args.resamples;
        bootstrap.seed = args.seed;
        const std::string table = emit_table(outcome_report_rows(outcome, bootstrap), format);
        if (args.out.empty())
            std::cout << table;
        else
            write_text(args.out, table);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "report: " << e.what() << "\n";
        return kExitFatal;
    }
}

}  // namespace refinery
