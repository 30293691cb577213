#include "refinery/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace refinery {

// ---------------------------------------------------------------------------
// Dimensions
// ---------------------------------------------------------------------------

DimOrder default_order() {
    return {Dimension::faithfulness, Dimension::completeness, Dimension::conciseness};
}

std::string dimension_name(Dimension d) {
    switch (d) {
        case Dimension::faithfulness: return "faithfulness";
        case Dimension::completeness: return "completeness";
        case Dimension::conciseness: return "conciseness";
    }
    throw Error("invalid dimension value");
}

Dimension dimension_from_name(const std::string& name) {
    std::string lower = name;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "faithfulness" || lower == "faith") return Dimension::faithfulness;
    if (lower == "completeness" || lower == "comp") return Dimension::completeness;
    if (lower == "conciseness" || lower == "conc") return Dimension::conciseness;
    throw Error("unknown dimension: " + name);
}

const std::array<DimOrder, 6>& all_orders() {
    static const std::array<DimOrder, 6> orders = {{
        {Dimension::faithfulness, Dimension::completeness, Dimension::conciseness},
        {Dimension::faithfulness, Dimension::conciseness, Dimension::completeness},
        {Dimension::completeness, Dimension::faithfulness, Dimension::conciseness},
        {Dimension::completeness, Dimension::conciseness, Dimension::faithfulness},
        {Dimension::conciseness, Dimension::faithfulness, Dimension::completeness},
        {Dimension::conciseness, Dimension::completeness, Dimension::faithfulness},
    }};
    return orders;
}

std::string order_to_string(const DimOrder& order) {
    std::string out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) out += ",";
        out += dimension_name(order[i]);
    }
    return out;
}

DimOrder order_from_string(const std::string& s) {
    DimOrder order{};
    std::size_t pos = 0, idx = 0;
    while (idx < 3) {
        std::size_t comma = s.find(',', pos);
        std::string part = (comma == std::string::npos) ? s.substr(pos) : s.substr(pos, comma - pos);
        order[idx++] = dimension_from_name(part);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (idx != 3) throw Error("order string must name three dimensions: " + s);
    std::set<Dimension> seen(order.begin(), order.end());
    if (seen.size() != 3) throw Error("order string repeats a dimension: " + s);
    return order;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

json labels_to_json(const FeedbackLabels& labels) {
    return json{{"faith", labels.faith}, {"comp", labels.comp}, {"conc", labels.conc}};
}

FeedbackLabels labels_from_json(const json& j) {
    FeedbackLabels out;
    out.faith = j.at("faith").get<std::vector<int>>();
    out.comp = j.at("comp").get<std::vector<int>>();
    out.conc = j.at("conc").get<std::vector<int>>();
    return out;
}

// ---------------------------------------------------------------------------
// Corpus serialization
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string> kDocumentKeys = {"kind", "id", "text", "domain", "format"};
const std::set<std::string> kSummaryKeys = {"kind", "doc_id", "summarizer", "sentences", "text"};
const std::set<std::string> kKeyfactKeys = {"kind", "doc_id", "facts"};

json collect_extra(const json& j, const std::set<std::string>& known) {
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) extra[it.key()] = it.value();
    }
    return extra;
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw Error(std::string("missing or non-string field \"") + key + "\"");
    return j.at(key).get<std::string>();
}

std::vector<std::string> require_string_array(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array())
        throw Error(std::string("missing or non-array field \"") + key + "\"");
    std::vector<std::string> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_string()) throw Error(std::string("non-string element in \"") + key + "\"");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

json document_to_json(const Document& d) {
    json j{{"kind", "document"}, {"id", d.id}, {"text", d.text}};
    if (!d.domain.empty()) j["domain"] = d.domain;
    if (!d.format.empty()) j["format"] = d.format;
    for (auto it = d.extra.begin(); it != d.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

Document document_from_json(const json& j) {
    Document d;
    d.id = require_string(j, "id");
    d.text = require_string(j, "text");
    if (j.contains("domain")) d.domain = require_string(j, "domain");
    if (j.contains("format")) d.format = require_string(j, "format");
    d.extra = collect_extra(j, kDocumentKeys);
    return d;
}

json summary_to_json(const SummaryRecord& s) {
    json j{{"kind", "summary"}, {"doc_id", s.doc_id}, {"summarizer", s.summarizer}};
    if (s.stored_as_text)
        j["text"] = s.text();
    else
        j["sentences"] = s.sentences;
    for (auto it = s.extra.begin(); it != s.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

SummaryRecord summary_from_json(const json& j) {
    SummaryRecord s;
    s.doc_id = require_string(j, "doc_id");
    s.summarizer = require_string(j, "summarizer");
    if (j.contains("sentences")) {
        s.sentences = require_string_array(j, "sentences");
    } else if (j.contains("text")) {
        s.sentences = segment_sentences(require_string(j, "text"));
        s.stored_as_text = true;
    } else {
        throw Error("summary record needs \"sentences\" or \"text\"");
    }
    s.extra = collect_extra(j, kSummaryKeys);
    return s;
}

json keyfacts_to_json(const KeyFactSet& k) {
    json j{{"kind", "keyfacts"}, {"doc_id", k.doc_id}, {"facts", k.facts}};
    for (auto it = k.extra.begin(); it != k.extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

KeyFactSet keyfacts_from_json(const json& j) {
    KeyFactSet k;
    k.doc_id = require_string(j, "doc_id");
    k.facts = require_string_array(j, "facts");
    k.extra = collect_extra(j, kKeyfactKeys);
    return k;
}

std::string SummaryRecord::text() const {
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i) out += " ";
        out += sentences[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus load / save
// ---------------------------------------------------------------------------

const CorpusGroup* Corpus::find(const std::string& doc_id) const {
    for (const auto& g : groups)
        if (g.doc.id == doc_id) return &g;
    return nullptr;
}

std::size_t Corpus::summary_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.summaries.size();
    return n;
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file: " + path.string());

    Corpus corpus;
    std::map<std::string, std::size_t> index;  // doc id -> group position
    struct Pending {
        json record;
        long line;
    };
    std::vector<Pending> pending_summaries, pending_keyfacts;

    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        std::string kind;
        try {
            kind = require_string(j, "kind");
        } catch (const Error& e) {
            throw CorpusError(e.what(), lineno);
        }
        try {
            if (kind == "document") {
                Document d = document_from_json(j);
                if (index.count(d.id)) throw Error("duplicate document id: " + d.id);
                index[d.id] = corpus.groups.size();
                corpus.groups.push_back(CorpusGroup{std::move(d), {}, std::nullopt});
            } else if (kind == "summary") {
                pending_summaries.push_back({std::move(j), lineno});
            } else if (kind == "keyfacts") {
                pending_keyfacts.push_back({std::move(j), lineno});
            } else {
                throw Error("unknown record kind: " + kind);
            }
        } catch (const CorpusError&) {
            throw;
        } catch (const Error& e) {
            throw CorpusError(e.what(), lineno);
        }
    }

    for (const auto& p : pending_summaries) {
        try {
            SummaryRecord s = summary_from_json(p.record);
            auto it = index.find(s.doc_id);
            if (it == index.end()) throw Error("summary references unknown document id: " + s.doc_id);
            corpus.groups[it->second].summaries.push_back(std::move(s));
        } catch (const Error& e) {
            throw CorpusError(e.what(), p.line);
        }
    }
    for (const auto& p : pending_keyfacts) {
        try {
            KeyFactSet k = keyfacts_from_json(p.record);
            auto it = index.find(k.doc_id);
            if (it == index.end()) throw Error("keyfacts reference unknown document id: " + k.doc_id);
            auto& group = corpus.groups[it->second];
            if (group.keyfacts) throw Error("duplicate keyfacts for document id: " + k.doc_id);
            group.keyfacts = std::move(k);
        } catch (const Error& e) {
            throw CorpusError(e.what(), p.line);
        }
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::vector<json> records;
    for (const auto& g : corpus.groups) {
        records.push_back(document_to_json(g.doc));
        for (const auto& s : g.summaries) records.push_back(summary_to_json(s));
        if (g.keyfacts) records.push_back(keyfacts_to_json(*g.keyfacts));
    }
    save_results(records, path);
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& abbreviations() {
    static const std::set<std::string> abbr = {
        "Dr.",   "Mr.",  "Mrs.",  "Ms.",   "Prof.", "St.",   "Jr.",    "Sr.",
        "Gen.",  "Col.", "Capt.", "Lt.",   "Sgt.",  "Rev.",  "Hon.",   "Gov.",
        "Sen.",  "Rep.", "vs.",   "etc.",  "e.g.",  "i.e.",  "cf.",    "al.",
        "No.",   "Fig.", "Figs.", "Eq.",   "Mt.",   "Inc.",  "Ltd.",   "Co.",
        "Corp.", "Jan.", "Feb.",  "Mar.",  "Apr.",  "Jun.",  "Jul.",   "Aug.",
        "Sep.",  "Sept.", "Oct.", "Nov.",  "Dec.",  "approx.", "dept.", "est.",
    };
    return abbr;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_closing(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

bool is_opening(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }

bool starts_sentence(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || is_opening(c);
}

// The whitespace-delimited token ending at position i (inclusive), with any
// leading opening punctuation stripped.
std::string token_ending_at(const std::string& text, std::size_t i) {
    std::size_t start = i;
    while (start > 0 && !is_space(text[start - 1])) --start;
    while (start < i && is_opening(text[start])) ++start;
    return text.substr(start, i - start + 1);
}

bool is_initial_or_acronym(const std::string& token) {
    // Single capital initial: "A."
    if (token.size() == 2 && token[0] >= 'A' && token[0] <= 'Z' && token[1] == '.') return true;
    // Dotted acronym: "U.S.", "p.m."
    if (token.size() >= 4 && token.size() % 2 == 0 && token.back() == '.') {
        for (std::size_t i = 0; i < token.size(); i += 2) {
            if (!std::isalpha(static_cast<unsigned char>(token[i])) || token[i + 1] != '.')
                return false;
        }
        return true;
    }
    return false;
}

bool guarded_abbreviation(const std::string& text, std::size_t dot) {
    std::string token = token_ending_at(text, dot);
    if (abbreviations().count(token)) return true;
    return is_initial_or_acronym(token);
}

std::string normalize_ws(const std::string& s) {
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (is_space(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out += ' ';
        in_space = false;
        out += c;
    }
    return out;
}

}  // namespace

std::vector<std::string> segment_sentences(const std::string& text) {
    std::vector<std::string> sentences;
    const std::size_t n = text.size();
    std::size_t start = 0;
    std::size_t i = 0;

    auto flush = [&](std::size_t end) {
        std::string s = normalize_ws(text.substr(start, end - start));
        if (!s.empty()) sentences.push_back(std::move(s));
        start = end;
    };

    while (i < n) {
        if (!is_terminal(text[i])) {
            ++i;
            continue;
        }
        const bool single_dot = text[i] == '.' && (i + 1 >= n || !is_terminal(text[i + 1]));
        std::size_t run_end = i;
        while (run_end + 1 < n && is_terminal(text[run_end + 1])) ++run_end;
        std::size_t after = run_end + 1;
        while (after < n && is_closing(text[after])) ++after;

        if (after >= n) {
            flush(n);
            i = n;
            break;
        }
        if (!is_space(text[after])) {
            i = after;
            continue;
        }
        std::size_t next = after;
        while (next < n && is_space(text[next])) ++next;
        if (next >= n) {
            flush(n);
            i = n;
            break;
        }
        if (!starts_sentence(text[next])) {
            i = after;
            continue;
        }
        if (single_dot && guarded_abbreviation(text, i)) {
            i = after;
            continue;
        }
        flush(next);
        i = next;
    }
    if (start < n) flush(n);
    return sentences;
}

// ---------------------------------------------------------------------------
// JSONL IO
// ---------------------------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path.string());
    std::vector<json> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw CorpusError(std::string("invalid JSON: ") + e.what(), lineno);
        }
    }
    return out;
}

void save_results(const std::vector<json>& records, const std::filesystem::path& path,
                  bool append) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + path.string());
    for (const auto& r : records) out << r.dump() << "\n";
    if (!out) throw Error("write failed: " + path.string());
}

}  // namespace refinery
