#include "refinery/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace refinery {

// ---------------------------------------------------------------------------
// Categories
// ---------------------------------------------------------------------------

std::string category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::no_error: return "no error";
        case ErrorCategory::out_of_context: return "out-of-context error";
        case ErrorCategory::entity: return "entity error";
        case ErrorCategory::predicate: return "predicate error";
        case ErrorCategory::circumstantial: return "circumstantial error";
        case ErrorCategory::grammatical: return "grammatical error";
        case ErrorCategory::coreference: return "coreference error";
        case ErrorCategory::linking: return "linking error";
        case ErrorCategory::other: return "other error";
    }
    throw Error("invalid category value");
}

ErrorCategory category_from_name(const std::string& name) {
    std::string key;
    for (char c : name) {
        if (c == '_' || c == '-') {
            key += ' ';
        } else {
            key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    // trim and collapse spaces
    std::string norm;
    bool in_space = true;
    for (char c : key) {
        if (c == ' ') {
            in_space = true;
            continue;
        }
        if (in_space && !norm.empty()) norm += ' ';
        in_space = false;
        norm += c;
    }
    auto strip_suffix = [&](const std::string& s) {
        const std::string suffix = " error";
        if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
            return s.substr(0, s.size() - suffix.size());
        return s;
    };
    const std::string base = strip_suffix(norm);
    if (norm == "no error" || base == "no") return ErrorCategory::no_error;
    if (base == "out of context") return ErrorCategory::out_of_context;
    if (base == "entity") return ErrorCategory::entity;
    if (base == "predicate") return ErrorCategory::predicate;
    if (base == "circumstantial") return ErrorCategory::circumstantial;
    if (base == "grammatical") return ErrorCategory::grammatical;
    if (base == "coreference") return ErrorCategory::coreference;
    if (base == "linking") return ErrorCategory::linking;
    return ErrorCategory::other;
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

double DimensionScores::composite() const {
    return (faithfulness + completeness + conciseness) / 3.0;
}

double composite_score(const DimensionScores& s) { return s.composite(); }

json scores_to_json(const DimensionScores& s) {
    return json{{"faithfulness", s.faithfulness},
                {"completeness", s.completeness},
                {"conciseness", s.conciseness},
                {"composite", s.composite()}};
}

DimensionScores scores_from_json(const json& j) {
    DimensionScores s;
    s.faithfulness = j.at("faithfulness").get<double>();
    s.completeness = j.at("completeness").get<double>();
    s.conciseness = j.at("conciseness").get<double>();
    return s;
}

double score_faithfulness(const std::vector<FactCheckVerdict>& verdicts, std::size_t n) {
    if (n == 0) throw UndefinedScoreError("faithfulness undefined for empty summary");
    if (verdicts.size() != n)
        throw CardinalityError("verdict count " + std::to_string(verdicts.size()) +
                               " does not match sentence count " + std::to_string(n));
    std::size_t correct = 0;
    for (const auto& v : verdicts)
        if (v.category == ErrorCategory::no_error) ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::pair<double, double> score_alignment(const std::vector<AlignmentEdge>& edges,
                                          std::size_t m, std::size_t n) {
    if (m == 0) throw UndefinedScoreError("completeness undefined for empty key-fact set");
    if (n == 0) throw UndefinedScoreError("conciseness undefined for empty summary");
    if (edges.size() != m)
        throw CardinalityError("edge count " + std::to_string(edges.size()) +
                               " does not match key-fact count " + std::to_string(m));
    std::size_t matched = 0;
    std::set<int> cited;
    for (const auto& e : edges) {
        if (e.matched) ++matched;
        for (int line : e.line_numbers)
            if (line >= 1 && static_cast<std::size_t>(line) <= n) cited.insert(line);
    }
    return {static_cast<double>(matched) / static_cast<double>(m),
            static_cast<double>(cited.size()) / static_cast<double>(n)};
}

// ---------------------------------------------------------------------------
// Output repair
// ---------------------------------------------------------------------------

namespace {

// Substring of s forming a balanced JSON structure starting at `start`,
// or npos-length on imbalance. String contents are skipped.
std::optional<std::string> extract_balanced(const std::string& s, std::size_t start) {
    const char open = s[start];
    const char close = (open == '[') ? ']' : '}';
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == open || (open != '[' && c == '[') || (open != '{' && c == '{')) {
            ++depth;
        } else if (c == close || c == ']' || c == '}') {
            --depth;
            if (depth == 0) return s.substr(start, i - start + 1);
            if (depth < 0) return std::nullopt;
        }
    }
    return std::nullopt;
}

// Removes commas that directly precede a closing bracket.
std::string strip_trailing_commas(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) {
                out += s[++i];
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
        }
        out += c;
    }
    return out;
}

}  // namespace

json repair_and_parse_json(const std::string& raw) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '[' && raw[i] != '{') continue;
        auto candidate = extract_balanced(raw, i);
        if (!candidate) continue;
        try {
            return json::parse(strip_trailing_commas(*candidate));
        } catch (const json::exception&) {
            // fall through to the next candidate start
        }
    }
    throw ParseError("no parseable JSON structure in model output", raw);
}

std::string numbered_lines(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ". " + items[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

Evaluator::Evaluator(const PromptLibrary& prompts, EvalOptions options)
    : prompts_(&prompts), options_(std::move(options)) {}

ChatResponse Evaluator::call(ChatBackend& backend, const std::string& prompt) const {
    ChatRequest req;
    req.backend_id = options_.backend_id;
    req.messages = {{Role::user, prompt}};
    req.temperature = options_.temperature;
    req.max_tokens = options_.max_tokens;
    req.seed = options_.seed;
    return backend.complete(req);
}

FactCheckResult Evaluator::fact_check(const Document& doc, const SummaryRecord& summary,
                                      ChatBackend& backend) const {
    const std::size_t n = summary.sentences.size();
    if (n == 0) throw Error("fact check requires at least one summary sentence");

    const std::string prompt =
        prompts_->render("finesure_fact_check", {{"document", doc.text},
                                                 {"num_sentences", std::to_string(n)},
                                                 {"sentences", numbered_lines(summary.sentences)}});
    ChatResponse resp = call(backend, prompt);

    json parsed = repair_and_parse_json(resp.content);
    if (!parsed.is_array())
        throw ParseError("fact check output is not a JSON array", resp.content);
    if (parsed.size() != n)
        throw CardinalityError("fact check returned " + std::to_string(parsed.size()) +
                               " verdicts for " + std::to_string(n) + " sentences");

    FactCheckResult out;
    out.raw = resp.content;
    int index = 0;
    for (const auto& item : parsed) {
        FactCheckVerdict v;
        v.sentence_index = ++index;
        if (item.is_object()) {
            v.reason = item.value("reason", std::string{});
            v.category = category_from_name(item.value("category", std::string{"other"}));
        } else if (item.is_string()) {
            v.category = category_from_name(item.get<std::string>());
        } else {
            throw ParseError("fact check verdict has unexpected shape", resp.content);
        }
        out.verdicts.push_back(std::move(v));
    }
    return out;
}

KeyFactResult Evaluator::extract_key_facts(const std::string& text, ChatBackend& backend,
                                           const std::string& doc_id) const {
    if (text.empty()) throw Error("key fact extraction requires non-empty text");

    const std::string prompt =
        prompts_->render("finesure_keyfact_extraction", {{"summary", text}});
    ChatResponse resp = call(backend, prompt);

    json parsed = repair_and_parse_json(resp.content);
    const json* list = nullptr;
    if (parsed.is_object()) {
        for (const char* key : {"key facts", "key_facts", "keyfacts"}) {
            if (parsed.contains(key) && parsed.at(key).is_array()) {
                list = &parsed.at(key);
                break;
            }
        }
    } else if (parsed.is_array()) {
        list = &parsed;
    }
    if (!list) throw ParseError("key fact output has no \"key facts\" list", resp.content);

    KeyFactResult out;
    out.raw = resp.content;
    out.facts.doc_id = doc_id;
    std::set<std::string> seen;
    for (const auto& item : *list) {
        if (!item.is_string()) continue;
        std::string fact = item.get<std::string>();
        if (fact.empty() || seen.count(fact)) continue;
        seen.insert(fact);
        out.facts.facts.push_back(std::move(fact));
    }
    if (out.facts.facts.empty()) throw ParseError("no key facts extracted", resp.content);
    if (out.facts.facts.size() > 16) {
        out.warnings.push_back("extraction returned " + std::to_string(out.facts.facts.size()) +
                               " key facts; truncated to 16");
        out.facts.facts.resize(16);
    }
    return out;
}

AlignmentResult Evaluator::align_key_facts(const SummaryRecord& summary,
                                           const KeyFactSet& keyfacts,
                                           ChatBackend& backend) const {
    const std::size_t n = summary.sentences.size();
    const std::size_t m = keyfacts.facts.size();
    if (m == 0) throw Error("alignment requires at least one key fact");
    if (n == 0) throw Error("alignment requires at least one summary sentence");

    const std::string prompt = prompts_->render(
        "finesure_keyfact_alignment", {{"summary", numbered_lines(summary.sentences)},
                                       {"num_key_facts", std::to_string(m)},
                                       {"key_facts", numbered_lines(keyfacts.facts)}});
    ChatResponse resp = call(backend, prompt);

    json parsed = repair_and_parse_json(resp.content);
    if (!parsed.is_array())
        throw ParseError("alignment output is not a JSON array", resp.content);
    if (parsed.size() != m)
        throw CardinalityError("alignment returned " + std::to_string(parsed.size()) +
                               " entries for " + std::to_string(m) + " key facts");

    AlignmentResult out;
    out.raw = resp.content;
    int index = 0;
    for (const auto& item : parsed) {
        AlignmentEdge edge;
        edge.keyfact_index = ++index;
        if (!item.is_object())
            throw ParseError("alignment entry has unexpected shape", resp.content);

        std::string response = item.value("response", std::string{});
        std::transform(response.begin(), response.end(), response.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        edge.matched = (response == "yes");

        if (edge.matched) {
            std::set<int> lines;
            const json* nums = nullptr;
            for (const char* key : {"line number", "line_number", "line numbers"}) {
                if (item.contains(key)) {
                    nums = &item.at(key);
                    break;
                }
            }
            if (nums) {
                auto add_line = [&](const json& v) {
                    if (!v.is_number_integer()) return;
                    const int line = v.get<int>();
                    if (line >= 1 && static_cast<std::size_t>(line) <= n) {
                        lines.insert(line);
                    } else {
                        out.warnings.push_back("key fact " + std::to_string(edge.keyfact_index) +
                                               " cites out-of-range line " + std::to_string(line));
                    }
                };
                if (nums->is_array()) {
                    for (const auto& v : *nums) add_line(v);
                } else {
                    add_line(*nums);
                }
            }
            edge.line_numbers.assign(lines.begin(), lines.end());
        }
        out.edges.push_back(std::move(edge));
    }
    return out;
}

}  // namespace refinery
