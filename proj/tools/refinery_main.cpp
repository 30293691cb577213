#include <CLI11.hpp>

#include "refinery/commands.hpp"

int main(int argc, char** argv) {
    using namespace refinery;

    CLI::App app{"refinery: feedback-driven summary refinement harness"};
    app.name("refinery");  // keep help output independent of the invocation path
    app.require_subcommand(1);
    app.footer("Pipelines: " + pipeline_help_line() +
               "\nOrder policies: " + order_policy_help_line() +
               "\n\nThe API key for live backends is read from the REFINERY_API_KEY "
               "environment variable; it is never accepted as a flag or config value.");

    EvaluateArgs eval_args;
    auto* eval_cmd =
        app.add_subcommand("evaluate", "Score and label summaries with the detector backend");
    eval_cmd->add_option("--config", eval_args.config_path, "Config file")
        ->capture_default_str();
    eval_cmd->add_option("--corpus", eval_args.corpus, "Corpus JSONL (overrides [corpus] path)");
    eval_cmd->add_option("--backend", eval_args.backend,
                         "Backend id (overrides [roles] detector.high)");
    eval_cmd->add_option("--out", eval_args.out, "Output JSONL")->capture_default_str();

    RefineArgs refine_args;
    auto* refine_cmd = app.add_subcommand("refine", "Refine summaries with a pipeline");
    refine_cmd->add_option("--config", refine_args.config_path, "Config file")
        ->capture_default_str();
    refine_cmd->add_option("--corpus", refine_args.corpus,
                           "Corpus JSONL (overrides [corpus] path)");
    refine_cmd->add_option("--labels", refine_args.labels,
                           "Evaluation JSONL from `evaluate`; omit to detect inline");
    refine_cmd
        ->add_option("--pipeline", refine_args.pipeline,
                     "Pipeline kind (" + pipeline_help_line() + ")")
        ->capture_default_str();
    refine_cmd
        ->add_option("--order-policy", refine_args.order_policy,
                     "Dimension order policy (" + order_policy_help_line() + ")")
        ->capture_default_str();
    refine_cmd->add_option("--seed", refine_args.seed,
                           "RNG seed; omitted -> random, recorded in the manifest");
    refine_cmd->add_flag("--stale-labels", refine_args.stale_labels,
                         "Skip re-evaluation between sequential turns");
    refine_cmd->add_option("--out", refine_args.out, "Output JSONL")->capture_default_str();

    BuildDatasetArgs build_args;
    auto* build_cmd =
        app.add_subcommand("build-dataset", "Distill filtered refinement training records");
    build_cmd->add_option("--config", build_args.config_path, "Config file")
        ->capture_default_str();
    build_cmd->add_option("--corpus", build_args.corpus,
                          "Corpus JSONL (overrides [corpus] path)");
    build_cmd->add_option("--out", build_args.out, "Training JSONL")->capture_default_str();
    build_cmd->add_option("--ledger", build_args.ledger_out,
                          "Write the stage ledger here instead of stdout");
    build_cmd
        ->add_option("--feedback-tier", build_args.feedback_tier,
                     "Detector quality tier (high, low)")
        ->capture_default_str();
    build_cmd
        ->add_option("--strategy", build_args.strategy,
                     "Teacher reasoning strategy (reflective, receptive)")
        ->capture_default_str();
    build_cmd->add_flag("--strict-delta", build_args.strict_delta,
                        "Require strict improvement on every dimension");
    build_cmd->add_option("--token-cap", build_args.token_cap, "Reasoning token cap")
        ->capture_default_str();
    build_cmd->add_option("--seed", build_args.seed,
                          "Order-shuffle seed; omitted -> random");
    build_cmd->add_flag("--no-shuffle", build_args.no_shuffle,
                        "Emit every record with the default dimension order");

    ExperimentArgs exp_args;
    auto* exp_cmd = app.add_subcommand("experiment", "Run the configured experiment plan");
    exp_cmd->add_option("--config", exp_args.config_path, "Config file")
        ->capture_default_str();
    exp_cmd->add_option("--out-dir", exp_args.out_dir,
                        "Output directory (overrides [paths] output)");
    exp_cmd->add_option("--seed", exp_args.seed,
                        "Seed override; omitted -> config seed or random, "
                        "recorded in the manifest");

    ReportArgs report_args;
    auto* report_cmd = app.add_subcommand("report", "Summarize an outcome file as a table");
    report_cmd->add_option("--outcome", report_args.outcome, "Outcome JSONL from `experiment`")
        ->capture_default_str();
    report_cmd->add_option("--format", report_args.format, "Table format (markdown, csv)")
        ->capture_default_str();
    report_cmd->add_option("--out", report_args.out, "Output file; omitted -> stdout");
    report_cmd->add_option("--seed", report_args.seed, "Bootstrap seed")
        ->capture_default_str();
    report_cmd->add_option("--resamples", report_args.resamples, "Bootstrap resamples")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    refine_args.seed_set = refine_cmd->count("--seed") > 0;
    build_args.seed_set = build_cmd->count("--seed") > 0;
    exp_args.seed_set = exp_cmd->count("--seed") > 0;

    if (eval_cmd->parsed()) return cmd_evaluate(eval_args);
    if (refine_cmd->parsed()) return cmd_refine(refine_args);
    if (build_cmd->parsed()) return cmd_build_dataset(build_args);
    if (exp_cmd->parsed()) return cmd_experiment(exp_args);
    if (report_cmd->parsed()) return cmd_report(report_args);
    return kExitFatal;
}
