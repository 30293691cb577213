#include "refinery/databuild.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace refinery {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

ChatRequest build_request(const std::string& backend_id, std::vector<ChatMessage> messages,
                          const PipelineOptions& options) {
    ChatRequest req;
    req.backend_id = backend_id;
    req.messages = std::move(messages);
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.seed = options.seed;
    return req;
}

}  // namespace

// ---------------------------------------------------------------------------
// Candidate generation and scoring
// ---------------------------------------------------------------------------

CandidateSet generate_summaries(
    const PromptLibrary& prompts, const Document& doc,
    const std::vector<std::pair<std::string, std::shared_ptr<ChatBackend>>>& backends,
    const PipelineOptions& options) {
    if (backends.empty()) throw Error("no summarizer backends configured");

    CandidateSet set;
    set.doc_id = doc.id;
    const std::string prompt = prompts.render("summary_generation", {{"input_text", doc.text}});
    for (const auto& [id, backend] : backends) {
        try {
            ChatRequest req = build_request(id, {{Role::user, prompt}}, options);
            validate_request(req);
            ChatResponse resp = backend->complete(req);
            json parsed = repair_and_parse_json(resp.content);
            if (!parsed.is_object() || !parsed.contains("summary") ||
                !parsed["summary"].is_string())
                throw ParseError("no \"summary\" key in generation output", resp.content);
            std::string text = parsed["summary"].get<std::string>();
            Candidate c;
            c.summarizer_id = id;
            c.summary.doc_id = doc.id;
            c.summary.summarizer = id;
            c.summary.sentences = segment_sentences(text);
            if (c.summary.sentences.empty())
                throw ParseError("empty generated summary", resp.content);
            set.candidates.push_back(std::move(c));
        } catch (const Error& e) {
            set.drops.push_back(
                {id, {FilterVerdict::Stage::format, false,
                      "generation failed: " + std::string(e.what())}});
        }
    }
    return set;
}

CandidateSet collect_initial_feedback(const Evaluator& evaluator, CandidateSet set,
                                      const Document& doc, const KeyFactSet& keyfacts,
                                      ChatBackend& detector) {
    std::vector<Candidate> kept;
    for (auto& c : set.candidates) {
        try {
            EvalBundle bundle = evaluate_summary(evaluator, doc, c.summary, keyfacts, detector);
            c.scores = bundle.scores;
            c.labels = bundle.labels;
            c.scored = true;
            kept.push_back(std::move(c));
        } catch (const Error& e) {
            set.drops.push_back(
                {c.summarizer_id, {FilterVerdict::Stage::format, false,
                                   "evaluator output unusable: " + std::string(e.what())}});
        }
    }
    set.candidates = std::move(kept);
    return set;
}

std::pair<std::string, SummaryRecord> select_best_summary(const CandidateSet& set) {
    const Candidate* best = nullptr;
    double best_sum = 0;
    for (const auto& c : set.candidates) {
        if (!c.scored) continue;
        double sum = c.scores.faithfulness + c.scores.completeness + c.scores.conciseness;
        if (!best || sum > best_sum) {
            best = &c;
            best_sum = sum;
        }
    }
    if (!best) throw Error("no scored candidates to choose a best summary from");
    return {best->summarizer_id, best->summary};
}

// ---------------------------------------------------------------------------
// Teacher reasoning
// ---------------------------------------------------------------------------

ThinkAnswer parse_teacher_output(const std::string& raw) {
    // Fully wrapped outputs reuse the inference parser.
    if (raw.find("<think>") != std::string::npos ||
        raw.find("<answer>") != std::string::npos) {
        try {
            return parse_reflective_output(raw);
        } catch (const ParseError&) {
            // fall through to the bare-format path
        }
    }

    ThinkAnswer out;
    if (auto boxed = extract_boxed(raw)) out.revised = *boxed;

    // Reasoning is everything before the final-summary marker (or, failing
    // that, before the boxed span itself).
    std::size_t cut = std::string::npos;
    for (const char* marker : {"Final Revised Summary", "Final Reviesed Summary"}) {
        std::size_t pos = raw.rfind(marker);
        if (pos != std::string::npos && (cut == std::string::npos || pos > cut)) cut = pos;
    }
    if (cut == std::string::npos) cut = raw.rfind("\\boxed");
    std::string reasoning = cut == std::string::npos ? raw : raw.substr(0, cut);
    // Strip marker decoration left dangling at the cut: asterisks, a
    // trailing "\[" opener, fence lines.
    while (true) {
        std::string t = trim(reasoning);
        if (t.size() >= 2 && t.compare(t.size() - 2, 2, "\\[") == 0) {
            reasoning = t.substr(0, t.size() - 2);
            continue;
        }
        if (!t.empty() && (t.back() == '*' || t.back() == ':')) {
            reasoning = t.substr(0, t.size() - 1);
            continue;
        }
        if (t.size() >= 3 && t.compare(t.size() - 3, 3, "```") == 0) {
            reasoning = t.substr(0, t.size() - 3);
            continue;
        }
        reasoning = t;
        break;
    }
    out.reasoning = reasoning;
    return out;
}

ReasoningSample generate_reasoning(const PromptLibrary& prompts, const Document& doc,
                                   const Candidate& candidate, const KeyFactSet& keyfacts,
                                   const std::string& best_summary, const DimOrder& order,
                                   ChatBackend& teacher, const std::string& teacher_id,
                                   InstructionStyle style, const PipelineOptions& options) {
    ReasoningSample sample;
    sample.doc_id = doc.id;
    sample.summarizer = candidate.summarizer_id;
    sample.document = doc.text;
    sample.summary = candidate.summary;
    sample.feedback_labels = candidate.labels;
    sample.best_summary = best_summary;
    sample.order_used = order;
    sample.before = candidate.scores;
    for (Dimension d :
         {Dimension::faithfulness, Dimension::completeness, Dimension::conciseness})
        sample.feedback_blocks[static_cast<std::size_t>(d)] =
            render_dimension_block(d, candidate.labels, candidate.summary, keyfacts);

    std::string feedback;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) feedback += "\n\n";
        feedback += sample.feedback_blocks[static_cast<std::size_t>(order[i])];
    }

    const bool receptive = style == InstructionStyle::receptive;
    std::map<std::string, std::string> slots = {
        {"instructions", instruction_block(order, style)},
        {"document", doc.text},
        {"summary", candidate.summary.text()},
        {"feedback", feedback}};
    if (!receptive) slots["best_summary"] = best_summary;
    std::string prompt =
        prompts.render(receptive ? "receptive_generation" : "reflective_generation", slots);

    ChatRequest req = build_request(teacher_id, {{Role::user, prompt}}, options);
    validate_request(req);
    ChatResponse resp = teacher.complete(req);
    sample.raw = resp.content;

    ThinkAnswer parsed = parse_teacher_output(resp.content);
    sample.reasoning = parsed.reasoning;
    sample.revised = parsed.revised;
    sample.token_count = count_tokens(sample.reasoning);
    return sample;
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

FilterVerdict format_filter(const ReasoningSample& sample, long token_cap) {
    FilterVerdict v;
    v.stage = FilterVerdict::Stage::format;
    if (sample.revised.empty()) {
        v.reason = "malformed output: no boxed revised summary";
        return v;
    }
    if (sample.reasoning.empty()) {
        v.reason = "malformed output: empty reasoning";
        return v;
    }
    if (sample.token_count > token_cap) {
        v.reason = "reasoning tokens over cap (" + std::to_string(sample.token_count) + " > " +
                   std::to_string(token_cap) + ")";
        return v;
    }
    v.passed = true;
    return v;
}

FilterVerdict verification_filter(const DimensionScores& before, const DimensionScores& after,
                                  bool strict_delta) {
    FilterVerdict v;
    v.stage = FilterVerdict::Stage::verification;
    if (after.faithfulness != 1.0) {
        v.reason = "revised faithfulness below 1";
        return v;
    }
    if (after.completeness < 0.5) {
        v.reason = "revised completeness below 0.5";
        return v;
    }
    if (after.conciseness < 0.5) {
        v.reason = "revised conciseness below 0.5";
        return v;
    }
    const std::array<std::pair<const char*, double>, 3> deltas{
        std::pair<const char*, double>{"faithfulness", after.faithfulness - before.faithfulness},
        {"completeness", after.completeness - before.completeness},
        {"conciseness", after.conciseness - before.conciseness}};
    for (const auto& [name, delta] : deltas) {
        if (strict_delta ? delta <= 0 : delta < 0) {
            v.reason = strict_delta
                           ? std::string(name) + " did not strictly improve"
                           : std::string(name) + " regressed";
            return v;
        }
    }
    v.passed = true;
    return v;
}

// ---------------------------------------------------------------------------
// Training records
// ---------------------------------------------------------------------------

std::string wrap_assistant_output(const std::string& reasoning, const std::string& revised) {
    return "<think>\n" + reasoning + "\n</think>\n<answer>\n**Final Revised Summary:**\n" +
           "\\[ \\boxed{\\text{" + revised + "}} \\]\n</answer>";
}

json training_record_to_json(const TrainingRecord& r) {
    json j;
    j["messages"] = json::array({json{{"role", "system"}, {"content", r.system}},
                                 json{{"role", "user"}, {"content", r.user}},
                                 json{{"role", "assistant"}, {"content", r.assistant}}});
    j["meta"] = r.meta;
    return j;
}

void write_training_records(const std::vector<TrainingRecord>& records,
                            const std::filesystem::path& path) {
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(training_record_to_json(r));
    save_results(lines, path);
}

std::vector<TrainingRecord> emit_training_records(const PromptLibrary& prompts,
                                                  const std::vector<ReasoningSample>& samples,
                                                  InstructionStyle style, bool shuffle_orders,
                                                  std::uint64_t seed) {
    const bool receptive = style == InstructionStyle::receptive;
    const OrderPolicy policy = OrderPolicy::random(seed);
    std::vector<TrainingRecord> records;
    records.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ReasoningSample& s = samples[i];
        DimOrder order = shuffle_orders ? choose_order(policy, i) : default_order();
        std::string feedback;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (k) feedback += "\n\n";
            feedback += s.feedback_blocks[static_cast<std::size_t>(order[k])];
        }
        // The training input never reveals the goal: reflective users get
        // the inference prompt (no ideal summary, no error types).
        std::string user = prompts.render(
            receptive ? "receptive_generation" : "refeed_inference",
            {{"instructions",
              instruction_block(order, receptive ? InstructionStyle::receptive
                                                 : InstructionStyle::reflective)},
             {"document", s.document},
             {"summary", s.summary.text()},
             {"feedback", feedback}});

        TrainingRecord r;
        r.system = prompts.raw("refeed_system");
        r.user = std::move(user);
        r.assistant = wrap_assistant_output(s.reasoning, s.revised);
        r.meta = json{{"doc_id", s.doc_id},
                      {"summarizer", s.summarizer},
                      {"tier", s.tier},
                      {"strategy", receptive ? "receptive" : "reflective"},
                      {"order", order_to_string(order)},
                      {"reasoning_tokens", s.token_count}};
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Stage ledger
// ---------------------------------------------------------------------------

std::string StageLedger::ratio_string() const {
    if (format_passed == 0) return "\u2014";
    double ratio = 100.0 * static_cast<double>(verification_passed) /
                   static_cast<double>(format_passed);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", ratio);
    return buf;
}

std::string ledger_table(const std::vector<StageLedger>& rows) {
    std::ostringstream out;
    out << "| Pipeline | Reasoning Strategy | Feedback Tier | Original Data | "
           "Format Filtering | Verification Filtering | Ratio of Successful Refinement |\n";
    out << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        out << "| " << r.pipeline << " | " << r.strategy << " | " << r.tier << " | "
            << r.original << " | " << r.format_passed << " | " << r.verification_passed
            << " | " << r.ratio_string() << " |\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Dataset drivers
// ---------------------------------------------------------------------------

namespace {

DatasetBuildReport build_impl(const DatabuildContext& ctx, const Corpus& corpus,
                              const DatabuildOptions& options, bool receptive) {
    DatasetBuildReport report;
    report.ledger.pipeline = receptive ? "P4-FT" : "ReFeed";
    report.ledger.strategy = receptive ? "Receptive" : "Reflective";
    report.ledger.tier = options.tier;

    const InstructionStyle teacher_style =
        receptive ? InstructionStyle::receptive : InstructionStyle::reflective_with_error_types;

    for (const auto& group : corpus.groups) {
        if (!group.keyfacts || group.keyfacts->facts.empty()) {
            report.rejects.push_back({group.doc.id,
                                      {FilterVerdict::Stage::format, false,
                                       "no key facts for document"}});
            continue;
        }
        if (group.summaries.empty()) {
            report.rejects.push_back({group.doc.id,
                                      {FilterVerdict::Stage::format, false,
                                       "no candidate summaries for document"}});
            continue;
        }
        CandidateSet set;
        set.doc_id = group.doc.id;
        for (const auto& s : group.summaries) {
            Candidate c;
            c.summarizer_id = s.summarizer;
            c.summary = s;
            set.candidates.push_back(std::move(c));
        }
        set = collect_initial_feedback(ctx.evaluator, std::move(set), group.doc,
                                       *group.keyfacts, ctx.detector);
        for (auto& d : set.drops)
            report.rejects.push_back({group.doc.id + "/" + d.first, d.second});
        if (set.candidates.empty()) {
            report.rejects.push_back({group.doc.id,
                                      {FilterVerdict::Stage::format, false,
                                       "no candidate survived initial feedback"}});
            continue;
        }
        auto [best_id, best] = select_best_summary(set);

        for (const auto& candidate : set.candidates) {
            const std::string key = group.doc.id + "/" + candidate.summarizer_id;
            ++report.ledger.original;

            ReasoningSample sample;
            try {
                sample = generate_reasoning(ctx.prompts, group.doc, candidate, *group.keyfacts,
                                            best.text(), options.teacher_order, ctx.teacher,
                                            ctx.teacher_id, teacher_style, options.call);
            } catch (const Error& e) {
                report.rejects.push_back({key,
                                          {FilterVerdict::Stage::format, false,
                                           "teacher call failed: " + std::string(e.what())}});
                continue;
            }
            sample.tier = options.tier;

            FilterVerdict fv = format_filter(sample, options.token_cap);
            if (!fv.passed) {
                report.rejects.push_back({key, fv});
                continue;
            }
            ++report.ledger.format_passed;

            SummaryRecord revised;
            revised.doc_id = group.doc.id;
            revised.summarizer = candidate.summarizer_id;
            revised.sentences = segment_sentences(sample.revised);
            DimensionScores after;
            try {
                after = evaluate_summary(ctx.evaluator, group.doc, revised, *group.keyfacts,
                                         ctx.detector)
                            .scores;
            } catch (const Error& e) {
                report.rejects.push_back(
                    {key,
                     {FilterVerdict::Stage::verification, false,
                      "re-evaluation failed: " + std::string(e.what())}});
                continue;
            }
            FilterVerdict vv = verification_filter(candidate.scores, after, options.strict_delta);
            if (!vv.passed) {
                report.rejects.push_back({key, vv});
                continue;
            }
            ++report.ledger.verification_passed;
            report.passing.push_back(std::move(sample));
        }
    }

    report.records = emit_training_records(
        ctx.prompts, report.passing,
        receptive ? InstructionStyle::receptive : InstructionStyle::reflective,
        options.shuffle_orders, options.shuffle_seed);
    return report;
}

}  // namespace

DatasetBuildReport build_dataset(const DatabuildContext& ctx, const Corpus& corpus,
                                 const DatabuildOptions& options) {
    return build_impl(ctx, corpus, options, false);
}

DatasetBuildReport build_p4ft_dataset(const DatabuildContext& ctx, const Corpus& corpus,
                                      const DatabuildOptions& options) {
    return build_impl(ctx, corpus, options, true);
}

}  // namespace refinery
