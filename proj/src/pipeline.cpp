#include "refinery/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace refinery {

namespace {

std::string short_dim(Dimension d) {
    switch (d) {
        case Dimension::faithfulness: return "faith";
        case Dimension::completeness: return "comp";
        case Dimension::conciseness: return "conc";
    }
    return "faith";
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Drops fence lines (``` with optional language tag) wholesale.
std::string strip_fences(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.rfind("```", 0) == 0) continue;
        if (!first) out << '\n';
        out << line;
        first = false;
    }
    return out.str();
}

// Skips decoration after a marker: asterisks, a colon, surrounding spaces.
std::size_t skip_marker_tail(const std::string& text, std::size_t pos) {
    while (pos < text.size() &&
           (text[pos] == '*' || text[pos] == ':' || text[pos] == ' ' || text[pos] == '\t'))
        ++pos;
    while (pos < text.size() && (text[pos] == '\n' || text[pos] == '\r')) ++pos;
    return pos;
}

std::string trim_trailing_markers(std::string s) {
    std::size_t e = s.size();
    while (e > 0 && (std::isspace(static_cast<unsigned char>(s[e - 1])) || s[e - 1] == '*'))
        --e;
    s.resize(e);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// PipelineKind
// ---------------------------------------------------------------------------

std::string PipelineKind::name() const {
    switch (family) {
        case Family::p1: return "p1-" + short_dim(p1_dimension);
        case Family::p2: return "p2";
        case Family::p3: return "p3";
        case Family::p4: return "p4";
        case Family::refeed: return "refeed";
        case Family::dcr: return "dcr";
        case Family::acueval: return "acueval";
    }
    return "p4";
}

PipelineKind PipelineKind::from_name(const std::string& name) {
    if (name.rfind("p1-", 0) == 0)
        return PipelineKind{Family::p1, dimension_from_name(name.substr(3))};
    if (name == "p1") return PipelineKind{Family::p1, Dimension::faithfulness};
    if (name == "p2") return PipelineKind{Family::p2};
    if (name == "p3") return PipelineKind{Family::p3};
    if (name == "p4") return PipelineKind{Family::p4};
    if (name == "refeed") return PipelineKind{Family::refeed};
    if (name == "dcr") return PipelineKind{Family::dcr};
    if (name == "acueval") return PipelineKind{Family::acueval};
    std::string valid;
    for (const auto& n : all_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown pipeline: " + name + " (valid: " + valid + ")");
}

std::vector<std::string> PipelineKind::all_names() {
    return {"p1-faith", "p1-comp", "p1-conc", "p2", "p3", "p4", "refeed", "dcr", "acueval"};
}

// ---------------------------------------------------------------------------
// RefinementResult
// ---------------------------------------------------------------------------

std::vector<ChatMessage> RefinementResult::transcript() const {
    std::vector<ChatMessage> flat;
    for (const auto& session : sessions)
        flat.insert(flat.end(), session.begin(), session.end());
    return flat;
}

json refinement_to_json(const RefinementResult& r) {
    json j;
    j["kind"] = "refinement";
    j["pipeline"] = r.pipeline.name();
    j["order_used"] = order_to_string(r.order_used);
    j["doc_id"] = r.revised.doc_id;
    j["summarizer"] = r.revised.summarizer;
    j["revised"] = r.revised.sentences;
    j["reasoning"] = r.reasoning ? json(*r.reasoning) : json(nullptr);
    if (r.per_turn) {
        j["per_turn"] = *r.per_turn;
    } else {
        j["per_turn"] = nullptr;
    }
    json sessions = json::array();
    for (const auto& session : r.sessions) {
        json msgs = json::array();
        for (const auto& m : session) msgs.push_back(message_to_json(m));
        sessions.push_back(std::move(msgs));
    }
    j["sessions"] = std::move(sessions);
    return j;
}

RefinementResult refinement_from_json(const json& j) {
    RefinementResult r;
    r.pipeline = PipelineKind::from_name(j.at("pipeline").get<std::string>());
    r.order_used = order_from_string(j.at("order_used").get<std::string>());
    r.revised.doc_id = j.at("doc_id").get<std::string>();
    r.revised.summarizer = j.value("summarizer", std::string{});
    r.revised.sentences = j.at("revised").get<std::vector<std::string>>();
    if (j.contains("reasoning") && !j["reasoning"].is_null())
        r.reasoning = j["reasoning"].get<std::string>();
    if (j.contains("per_turn") && !j["per_turn"].is_null())
        r.per_turn = j["per_turn"].get<std::vector<std::string>>();
    if (j.contains("sessions")) {
        for (const auto& session : j["sessions"]) {
            std::vector<ChatMessage> msgs;
            for (const auto& m : session) msgs.push_back(message_from_json(m));
            r.sessions.push_back(std::move(msgs));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Output parsing
// ---------------------------------------------------------------------------

std::string parse_revised_summary(const std::string& raw) {
    const std::string text = strip_fences(raw);
    static const std::string kMarker = "Revised Summary";
    std::size_t pos = text.rfind(kMarker);
    if (pos == std::string::npos) {
        if (auto boxed = extract_boxed(text); boxed && !boxed->empty()) return *boxed;
        throw ParseError("no \"Revised Summary\" marker in model output", raw);
    }
    std::size_t start = skip_marker_tail(text, pos + kMarker.size());
    std::string out = trim_trailing_markers(text.substr(start));
    out = trim(out);
    if (out.empty()) throw ParseError("empty revised summary in model output", raw);
    return out;
}

std::optional<std::string> parse_feedback_reasoning(const std::string& raw) {
    const std::string text = strip_fences(raw);
    std::size_t rev = text.rfind("Revised Summary");
    if (rev == std::string::npos) return std::nullopt;
    static const std::string kMarker = "Feedback Reasoning";
    std::size_t pos = text.rfind(kMarker, rev);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t start = skip_marker_tail(text, pos + kMarker.size());
    if (start > rev) return std::nullopt;
    std::string out = trim(trim_trailing_markers(text.substr(start, rev - start)));
    if (out.empty()) return std::nullopt;
    return out;
}

std::optional<std::string> extract_boxed(const std::string& text) {
    static const std::string kBoxed = "\\boxed";
    std::size_t search_end = std::string::npos;
    while (true) {
        std::size_t pos = text.rfind(kBoxed, search_end);
        if (pos == std::string::npos) return std::nullopt;
        search_end = pos == 0 ? 0 : pos - 1;
        std::size_t i = pos + kBoxed.size();
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size() || text[i] != '{') {
            if (pos == 0) return std::nullopt;
            continue;
        }
        // Balanced scan over the braces, honoring backslash escapes.
        std::size_t depth = 1;
        std::size_t j = i + 1;
        while (j < text.size() && depth > 0) {
            char c = text[j];
            if (c == '\\' && j + 1 < text.size()) {
                j += 2;
                continue;
            }
            if (c == '{') ++depth;
            if (c == '}') --depth;
            ++j;
        }
        if (depth != 0) {
            if (pos == 0) return std::nullopt;
            continue;
        }
        std::string content = trim(text.substr(i + 1, j - i - 2));
        // Unwrap a \text{...} that spans the whole content.
        static const std::string kText = "\\text";
        if (content.rfind(kText, 0) == 0) {
            std::size_t k = kText.size();
            while (k < content.size() && std::isspace(static_cast<unsigned char>(content[k])))
                ++k;
            if (k < content.size() && content[k] == '{') {
                std::size_t d = 1;
                std::size_t e = k + 1;
                while (e < content.size() && d > 0) {
                    char c = content[e];
                    if (c == '\\' && e + 1 < content.size()) {
                        e += 2;
                        continue;
                    }
                    if (c == '{') ++d;
                    if (c == '}') --d;
                    ++e;
                }
                if (d == 0 && e == content.size())
                    content = trim(content.substr(k + 1, e - k - 2));
            }
        }
        return content;
    }
}

namespace {

std::optional<std::string> extract_tag(const std::string& text, const std::string& tag) {
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    std::size_t b = text.find(open);
    if (b == std::string::npos) return std::nullopt;
    std::size_t e = text.find(close, b + open.size());
    if (e == std::string::npos) return std::nullopt;
    return text.substr(b + open.size(), e - b - open.size());
}

}  // namespace

ThinkAnswer parse_reflective_output(const std::string& raw) {
    ThinkAnswer ta;
    if (auto think = extract_tag(raw, "think")) ta.reasoning = trim(*think);
    std::optional<std::string> boxed;
    if (auto answer = extract_tag(raw, "answer")) boxed = extract_boxed(*answer);
    if (!boxed) boxed = extract_boxed(raw);
    if (!boxed || boxed->empty())
        throw ParseError("no boxed revised summary in model output", raw);
    ta.revised = *boxed;
    return ta;
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace {

ChatRequest make_request(const PipelineContext& ctx, std::vector<ChatMessage> messages,
                         const std::string& backend_id) {
    ChatRequest req;
    req.backend_id = backend_id;
    req.messages = std::move(messages);
    req.temperature = ctx.options.temperature;
    req.max_tokens = ctx.options.max_tokens;
    req.seed = ctx.options.seed;
    return req;
}

// Appends the user turn, completes, appends the assistant reply, and
// returns the reply text.
std::string call_session(const PipelineContext& ctx, ChatBackend& backend,
                         const std::string& backend_id, std::vector<ChatMessage>& session,
                         std::string user_text) {
    session.push_back({Role::user, std::move(user_text)});
    ChatRequest req = make_request(ctx, session, backend_id);
    validate_request(req);
    ChatResponse resp = backend.complete(req);
    session.push_back({Role::assistant, resp.content});
    return resp.content;
}

SummaryRecord make_revised(const SummaryRecord& original, const std::string& text) {
    SummaryRecord r;
    r.doc_id = original.doc_id;
    r.summarizer = original.summarizer;
    r.sentences = segment_sentences(text);
    r.stored_as_text = original.stored_as_text;
    if (r.sentences.empty()) throw ParseError("revised summary is empty", text);
    return r;
}

std::vector<ChatMessage> fresh_session(const PipelineContext& ctx) {
    std::vector<ChatMessage> session;
    if (!ctx.options.system_prompt.empty())
        session.push_back({Role::system, ctx.options.system_prompt});
    return session;
}

// Original labels adjusted to a new sentence count: faith/conc truncated or
// zero-padded, completeness untouched (key facts do not move).
FeedbackLabels clamp_labels(const FeedbackLabels& labels, std::size_t n) {
    FeedbackLabels out = labels;
    out.faith.resize(n, 0);
    out.conc.resize(n, 0);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// P1: single dimension, single call
// ---------------------------------------------------------------------------

RefinementResult run_p1(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, Dimension target) {
    std::string feedback = render_dimension_block(target, labels, summary, keyfacts);
    std::string prompt = ctx.prompts.render(
        "refine_single", {{"instructions", instruction_line(target, InstructionStyle::receptive)},
                          {"document", doc.text},
                          {"summary", summary.text()},
                          {"feedback", feedback}});
    auto session = fresh_session(ctx);
    std::string out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);

    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::p1, target};
    r.revised = make_revised(summary, parse_revised_summary(out));
    r.reasoning = parse_feedback_reasoning(out);
    r.sessions.push_back(std::move(session));
    return r;
}

// ---------------------------------------------------------------------------
// P2: three fresh single-turn sessions
// ---------------------------------------------------------------------------

RefinementResult run_p2(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order) {
    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::p2};
    r.order_used = order;
    r.per_turn = std::vector<std::string>{};

    SummaryRecord current = summary;
    FeedbackLabels current_labels = labels;
    std::string last_out;
    for (int t = 0; t < 3; ++t) {
        try {
            if (t > 0) {
                bool can_reeval =
                    !ctx.options.stale_labels && ctx.evaluator != nullptr && ctx.detector != nullptr;
                if (can_reeval) {
                    EvalBundle bundle =
                        evaluate_summary(*ctx.evaluator, doc, current, keyfacts, *ctx.detector);
                    current_labels = bundle.labels;
                } else {
                    current_labels = clamp_labels(labels, current.sentences.size());
                }
            }
            Dimension dim = order[static_cast<std::size_t>(t)];
            std::string feedback = render_dimension_block(dim, current_labels, current, keyfacts);
            std::string prompt = ctx.prompts.render(
                "refine_single",
                {{"instructions", instruction_line(dim, InstructionStyle::receptive)},
                 {"document", doc.text},
                 {"summary", current.text()},
                 {"feedback", feedback}});
            auto session = fresh_session(ctx);
            last_out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);
            std::string revised_text = parse_revised_summary(last_out);
            current = make_revised(summary, revised_text);
            r.per_turn->push_back(revised_text);
            r.sessions.push_back(std::move(session));
        } catch (const ParseError& e) {
            throw ParseError("p2 turn " + std::to_string(t + 1) + ": " + e.what(), e.raw());
        }
    }
    r.revised = current;
    r.reasoning = parse_feedback_reasoning(last_out);
    return r;
}

// ---------------------------------------------------------------------------
// P3: one growing conversation
// ---------------------------------------------------------------------------

RefinementResult run_p3(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order) {
    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::p3};
    r.order_used = order;
    r.per_turn = std::vector<std::string>{};

    auto session = fresh_session(ctx);
    SummaryRecord current = summary;
    std::string last_out;
    for (int t = 0; t < 3; ++t) {
        try {
            // Feedback always refers to the original summary's labels: the
            // later turns instruct the model to refine its own reply.
            Dimension dim = order[static_cast<std::size_t>(t)];
            std::string feedback = render_dimension_block(dim, labels, summary, keyfacts);
            std::string prompt;
            if (t == 0) {
                prompt = ctx.prompts.render(
                    "refine_multi_turn1",
                    {{"instructions", instruction_block(order, InstructionStyle::receptive)},
                     {"document", doc.text},
                     {"summary", summary.text()},
                     {"feedback", feedback}});
            } else {
                prompt = ctx.prompts.render("refine_multi_turn_n", {{"feedback", feedback}});
            }
            last_out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);
            std::string revised_text = parse_revised_summary(last_out);
            current = make_revised(summary, revised_text);
            r.per_turn->push_back(revised_text);
        } catch (const ParseError& e) {
            throw ParseError("p3 turn " + std::to_string(t + 1) + ": " + e.what(), e.raw());
        }
    }
    r.sessions.push_back(std::move(session));
    r.revised = current;
    r.reasoning = parse_feedback_reasoning(last_out);
    return r;
}

// ---------------------------------------------------------------------------
// P4: simultaneous
// ---------------------------------------------------------------------------

RefinementResult run_p4(const PipelineContext& ctx, const Document& doc,
                        const SummaryRecord& summary, const FeedbackLabels& labels,
                        const KeyFactSet& keyfacts, const DimOrder& order) {
    std::string feedback = render_feedback(labels, summary, keyfacts, order).full();
    std::string prompt = ctx.prompts.render(
        "refine_simultaneous",
        {{"instructions", instruction_block(order, InstructionStyle::receptive)},
         {"document", doc.text},
         {"summary", summary.text()},
         {"feedback", feedback}});
    auto session = fresh_session(ctx);
    std::string out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);

    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::p4};
    r.order_used = order;
    r.revised = make_revised(summary, parse_revised_summary(out));
    r.reasoning = parse_feedback_reasoning(out);
    r.sessions.push_back(std::move(session));
    return r;
}

// ---------------------------------------------------------------------------
// ReFeed: reflective single call
// ---------------------------------------------------------------------------

RefinementResult run_refeed(const PipelineContext& ctx, const Document& doc,
                            const SummaryRecord& summary, const FeedbackLabels& labels,
                            const KeyFactSet& keyfacts, const DimOrder& order) {
    std::string feedback = render_feedback(labels, summary, keyfacts, order).full();
    std::string prompt = ctx.prompts.render(
        "refeed_inference",
        {{"instructions", instruction_block(order, InstructionStyle::reflective)},
         {"document", doc.text},
         {"summary", summary.text()},
         {"feedback", feedback}});
    std::vector<ChatMessage> session;
    session.push_back({Role::system, ctx.prompts.raw("refeed_system")});
    std::string out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);

    ThinkAnswer ta = parse_reflective_output(out);
    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::refeed};
    r.order_used = order;
    r.revised = make_revised(summary, ta.revised);
    if (!ta.reasoning.empty()) r.reasoning = ta.reasoning;
    r.sessions.push_back(std::move(session));
    return r;
}

// ---------------------------------------------------------------------------
// DCR: per-sentence critique, then refine
// ---------------------------------------------------------------------------

RefinementResult run_dcr(const PipelineContext& ctx, ChatBackend& reason_backend,
                         const std::string& reason_backend_id, const Document& doc,
                         const SummaryRecord& summary, const FeedbackLabels& labels) {
    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::dcr};

    std::vector<std::string> critiques;
    for (std::size_t i = 0; i < summary.sentences.size() && i < labels.faith.size(); ++i) {
        if (labels.faith[i] == 0) continue;
        try {
            std::string prompt = ctx.prompts.render(
                "dcr_reason", {{"document", doc.text}, {"summary", summary.sentences[i]}});
            std::vector<ChatMessage> session;
            std::string out =
                call_session(ctx, reason_backend, reason_backend_id, session, prompt);
            critiques.push_back(trim(out));
            r.sessions.push_back(std::move(session));
        } catch (const Error& e) {
            throw Error("dcr reason stage: " + std::string(e.what()));
        }
    }

    std::string feedback = "no issues found";
    if (!critiques.empty()) {
        std::ostringstream joined;
        for (std::size_t i = 0; i < critiques.size(); ++i) {
            if (i) joined << "\n\n";
            joined << critiques[i];
        }
        feedback = joined.str();
    }

    try {
        std::string prompt = ctx.prompts.render("dcr_refine", {{"document", doc.text},
                                                               {"summary", summary.text()},
                                                               {"feedback", feedback}});
        auto session = fresh_session(ctx);
        std::string out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);
        r.revised = make_revised(summary, parse_revised_summary(out));
        r.sessions.push_back(std::move(session));
    } catch (const ParseError& e) {
        throw ParseError("dcr refine stage: " + std::string(e.what()), e.raw());
    }
    return r;
}

// ---------------------------------------------------------------------------
// ACUEval: unsupported atomic facts as feedback
// ---------------------------------------------------------------------------

RefinementResult run_acueval(const PipelineContext& ctx, const Document& doc,
                             const SummaryRecord& summary,
                             const std::vector<std::string>& unsupported_facts) {
    std::string feedback;
    if (unsupported_facts.empty()) {
        feedback = "The summary is consistent with the source text.";
    } else {
        std::ostringstream out;
        out << "The summary is not consistent with the source text. "
               "The source text does not mention the following facts:\n";
        for (const auto& fact : unsupported_facts) out << "- " << fact << "\n";
        out << "\nThe summary should not include information that is not present in the "
               "article. Please check the document for the correct information and make "
               "appropriate edits.";
        feedback = out.str();
    }

    std::string prompt = ctx.prompts.render("acueval_refine", {{"document", doc.text},
                                                               {"summary", summary.text()},
                                                               {"feedback", feedback}});
    auto session = fresh_session(ctx);
    std::string out = call_session(ctx, ctx.backend, ctx.backend_id, session, prompt);

    RefinementResult r;
    r.pipeline = PipelineKind{PipelineKind::Family::acueval};
    r.revised = make_revised(summary, parse_revised_summary(out));
    r.sessions.push_back(std::move(session));
    return r;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

RefinementResult run_pipeline(const PipelineContext& ctx, PipelineKind kind,
                              const Document& doc, const SummaryRecord& summary,
                              const FeedbackLabels& labels, const KeyFactSet& keyfacts,
                              const DimOrder& order) {
    switch (kind.family) {
        case PipelineKind::Family::p1:
            return run_p1(ctx, doc, summary, labels, keyfacts, kind.p1_dimension);
        case PipelineKind::Family::p2:
            return run_p2(ctx, doc, summary, labels, keyfacts, order);
        case PipelineKind::Family::p3:
            return run_p3(ctx, doc, summary, labels, keyfacts, order);
        case PipelineKind::Family::p4:
            return run_p4(ctx, doc, summary, labels, keyfacts, order);
        case PipelineKind::Family::refeed:
            return run_refeed(ctx, doc, summary, labels, keyfacts, order);
        case PipelineKind::Family::dcr: {
            ChatBackend& reason = ctx.detector ? *ctx.detector : ctx.backend;
            const std::string& reason_id =
                ctx.detector && !ctx.detector_id.empty() ? ctx.detector_id : ctx.backend_id;
            return run_dcr(ctx, reason, reason_id, doc, summary, labels);
        }
        case PipelineKind::Family::acueval: {
            std::vector<std::string> unsupported;
            for (std::size_t i = 0; i < summary.sentences.size() && i < labels.faith.size();
                 ++i)
                if (labels.faith[i] == 1) unsupported.push_back(summary.sentences[i]);
            return run_acueval(ctx, doc, summary, unsupported);
        }
    }
    throw ConfigError("unknown pipeline kind");
}

}  // namespace refinery
