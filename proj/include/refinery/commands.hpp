#pragma once

#include <cstdint>
#include <string>

#include "refinery/config.hpp"

namespace refinery {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;       // full success
constexpr int kExitFatal = 1;    // configuration or unrecoverable error
constexpr int kExitPartial = 2;  // some records failed, output still written

struct EvaluateArgs {
    std::string config_path = "refinery.toml";
    std::string corpus;   // overrides [corpus] path
    std::string backend;  // overrides [roles] detector.high
    std::string out = "evaluation.jsonl";
};
int cmd_evaluate(const EvaluateArgs& args);

struct RefineArgs {
    std::string config_path = "refinery.toml";
    std::string corpus;
    std::string labels;  // labels file from `evaluate`; empty -> detect inline
    std::string pipeline = "p4";
    std::string order_policy = "fixed";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool stale_labels = false;
    std::string out = "refinement.jsonl";
};
int cmd_refine(const RefineArgs& args);

struct BuildDatasetArgs {
    std::string config_path = "refinery.toml";
    std::string corpus;
    std::string out = "training.jsonl";
    std::string ledger_out;  // empty -> ledger to stdout
    std::string feedback_tier = "high";
    std::string strategy = "reflective";  // or "receptive"
    bool strict_delta = false;
    long token_cap = 5000;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool no_shuffle = false;
};
int cmd_build_dataset(const BuildDatasetArgs& args);

struct ExperimentArgs {
    std::string config_path = "refinery.toml";
    std::string out_dir;  // overrides [paths] output
    std::uint64_t seed = 0;
    bool seed_set = false;
};
int cmd_experiment(const ExperimentArgs& args);

struct ReportArgs {
    std::string outcome = "outcome.jsonl";
    std::string format = "markdown";  // or "csv"
    std::string out;                  // empty -> stdout
    std::uint64_t seed = 0;
    long resamples = 10000;
};
int cmd_report(const ReportArgs& args);

// Newline-separated lists for help text.
std::string pipeline_help_line();
std::string order_policy_help_line();

}  // namespace refinery
