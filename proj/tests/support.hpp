#pragma once

// Shared scaffolding for the unit and acceptance suites: fixture paths,
// scratch directories, and a fully deterministic offline "model world".
//
// The world's rules make every mock response a pure function of the prompt:
//   * fact check     — a sentence is factually inconsistent iff its text
//                      contains "(bad)"; flagged as an entity error.
//   * alignment      — a key fact matches iff its final word (its token)
//                      appears in at least one summary sentence; matched
//                      facts cite exactly those sentence lines.
//   * refinement     — the canned "good" summary for the document found in
//                      the prompt, wrapped in the requested output format.
//   * teacher        — think/answer output whose boxed summary is the
//                      canned good summary; summaries carrying "(keepbad)"
//                      or "(nobox)" trigger verification / format failures.
// Because responses depend only on request content, the responders are safe
// under parallel execution and can be recorded to replay tapes.

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "refinery/config.hpp"

namespace refinery::testing {

inline std::filesystem::path fixture_path(const std::string& rel) {
    return std::filesystem::path(REFINERY_FIXTURE_DIR) / rel;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("refinery-" + tag + "-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

// ---------------------------------------------------------------------------
// Prompt dissection
// ---------------------------------------------------------------------------

inline std::string last_user_content(const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it)
        if (it->role == Role::user) return it->content;
    return {};
}

// Collects "1. ..." numbered lines from `text`, restarting on each "1.".
inline std::vector<std::vector<std::string>> numbered_groups(const std::string& text) {
    std::vector<std::vector<std::string>> groups;
    std::istringstream in(text);
    std::string line;
    int expected = 0;
    while (std::getline(in, line)) {
        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == 0 || i + 1 >= line.size() || line[i] != '.' || line[i + 1] != ' ') {
            expected = 0;
            continue;
        }
        const int num = std::stoi(line.substr(0, i));
        if (num == 1) {
            groups.emplace_back();
            expected = 1;
        } else if (num != expected) {
            expected = 0;
            continue;
        }
        groups.back().push_back(line.substr(i + 2));
        ++expected;
    }
    return groups;
}

// Final whitespace-separated word with trailing punctuation stripped.
inline std::string fact_token(const std::string& fact) {
    std::size_t end = fact.size();
    while (end > 0 && !std::isalnum(static_cast<unsigned char>(fact[end - 1]))) --end;
    std::size_t start = end;
    while (start > 0 && !std::isspace(static_cast<unsigned char>(fact[start - 1]))) --start;
    return fact.substr(start, end - start);
}

// ---------------------------------------------------------------------------
// Detector responder
// ---------------------------------------------------------------------------

inline std::string fact_check_response(const std::vector<std::string>& sentences) {
    json out = json::array();
    for (const auto& s : sentences) {
        const bool bad = s.find("(bad)") != std::string::npos;
        out.push_back(json{{"sentence", s},
                           {"reason", bad ? "contradicts the document" : "consistent"},
                           {"category", bad ? "entity error" : "no error"}});
    }
    return out.dump();
}

inline std::string alignment_response(const std::vector<std::string>& sentences,
                                      const std::vector<std::string>& facts) {
    json out = json::array();
    for (const auto& fact : facts) {
        const std::string token = fact_token(fact);
        json lines = json::array();
        for (std::size_t i = 0; i < sentences.size(); ++i)
            if (!token.empty() && sentences[i].find(token) != std::string::npos)
                lines.push_back(static_cast<int>(i + 1));
        out.push_back(json{{"key fact", fact},
                           {"response", lines.empty() ? "No" : "Yes"},
                           {"line number", lines}});
    }
    return out.dump();
}

// Serves fact-check, alignment, and sentence-critique requests under the
// world rules (the detector backend doubles as the critique model).
inline std::function<std::string(const ChatRequest&)> detector_responder() {
    return [](const ChatRequest& req) -> std::string {
        const std::string prompt = last_user_content(req);
        if (prompt.find("factually inconsistent span") != std::string::npos)
            return "The error span: (bad). Suggested fix: drop the marker.";
        auto groups = numbered_groups(prompt);
        if (prompt.find("assess the factuality of each summary sentence") !=
            std::string::npos) {
            if (groups.empty()) throw Error("mock detector: no sentences in prompt");
            return fact_check_response(groups.back());
        }
        if (prompt.find("assess if each key fact is inferred") != std::string::npos) {
            if (groups.size() < 2) throw Error("mock detector: missing prompt sections");
            return alignment_response(groups[groups.size() - 2], groups.back());
        }
        throw Error("mock detector: unrecognized prompt");
    };
}

// ---------------------------------------------------------------------------
// World corpus
// ---------------------------------------------------------------------------

struct WorldDoc {
    Document doc;
    KeyFactSet facts;
    std::vector<SummaryRecord> summaries;
    std::string good_summary;  // scores (1,1,1) under the world rules
};

inline SummaryRecord make_summary(const std::string& doc_id, const std::string& summarizer,
                                  std::vector<std::string> sentences) {
    SummaryRecord s;
    s.doc_id = doc_id;
    s.summarizer = summarizer;
    s.sentences = std::move(sentences);
    return s;
}

// Two documents, two summaries each, token pairs (alpha, bravo) and
// (charlie, delta). Initial summaries are imperfect; the canned good
// summary mentions every fact token once, in its own sentence.
inline std::vector<WorldDoc> world_docs() {
    std::vector<WorldDoc> docs(2);

    docs[0].doc.id = "d1";
    docs[0].doc.domain = "report";
    docs[0].doc.format = "non_dialogue";
    docs[0].doc.text =
        "Mission record d1 follows. The mission landed in alpha. "
        "The crew numbered bravo. Weather on site stayed calm.";
    docs[0].facts.doc_id = "d1";
    docs[0].facts.facts = {"The mission landed in alpha.", "The crew numbered bravo."};
    docs[0].summaries = {
        make_summary("d1", "m1",
                     {"The mission landed in alpha.", "Some filler chatter followed."}),
        make_summary("d1", "m2", {"The mission landed in alpha (bad)."}),
    };
    docs[0].good_summary = "The mission landed in alpha. The crew numbered bravo.";

    docs[1].doc.id = "d2";
    docs[1].doc.domain = "report";
    docs[1].doc.format = "dialogue";
    docs[1].doc.text =
        "Mission record d2 follows. The probe reached charlie. "
        "Its battery lasted delta. Telemetry stayed stable throughout.";
    docs[1].facts.doc_id = "d2";
    docs[1].facts.facts = {"The probe reached charlie.", "The battery lasted delta."};
    docs[1].summaries = {
        make_summary("d2", "m1",
                     {"The probe reached charlie.", "The battery lasted delta."}),
        make_summary("d2", "m2", {"The probe reached charlie (bad).", "Idle words only."}),
    };
    docs[1].good_summary = "The probe reached charlie. The battery lasted delta.";

    return docs;
}

inline Corpus world_corpus() {
    Corpus corpus;
    for (const auto& wd : world_docs()) {
        CorpusGroup group;
        group.doc = wd.doc;
        group.summaries = wd.summaries;
        group.keyfacts = wd.facts;
        corpus.groups.push_back(std::move(group));
    }
    return corpus;
}

inline std::filesystem::path write_world_corpus(const std::filesystem::path& dir) {
    const auto path = dir / "corpus.jsonl";
    save_corpus(world_corpus(), path);
    return path;
}

// Good summary for whichever world document appears in the prompt.
inline std::string good_summary_for_prompt(const std::string& prompt) {
    for (const auto& wd : world_docs())
        if (prompt.find("Mission record " + wd.doc.id) != std::string::npos)
            return wd.good_summary;
    throw Error("mock refiner: no world document in prompt");
}

// ---------------------------------------------------------------------------
// Refiner / teacher responders
// ---------------------------------------------------------------------------

// "Feedback Reasoning: ... Revised Summary: <good>" for the receptive
// refinement prompts (P1-P4, DCR refine, ACUEval).
inline std::function<std::string(const ChatRequest&)> refiner_responder() {
    return [](const ChatRequest& req) -> std::string {
        const std::string prompt = last_user_content(req);
        if (prompt.find("factually inconsistent span") != std::string::npos)
            return "The error span: (bad). Suggested fix: drop the marker.";
        // Multi-turn follow-ups carry only feedback; scan the whole
        // conversation for the document.
        std::string good;
        for (const auto& m : req.messages) {
            if (m.content.find("Mission record") == std::string::npos) continue;
            good = good_summary_for_prompt(m.content);
            break;
        }
        if (good.empty()) throw Error("mock refiner: no world document in request");
        return "Feedback Reasoning:\nThe feedback is applied directly.\nRevised Summary:\n" +
               good;
    };
}

// ReFeed-style output: think/answer tags around the boxed good summary.
inline std::function<std::string(const ChatRequest&)> refeed_responder() {
    return [](const ChatRequest& req) -> std::string {
        std::string good;
        for (const auto& m : req.messages) {
            if (m.content.find("Mission record") == std::string::npos) continue;
            good = good_summary_for_prompt(m.content);
            break;
        }
        if (good.empty()) throw Error("mock refeed: no world document in request");
        return "<think>\nChecking each feedback item against the document.\n</think>\n"
               "<answer>\n**Final Revised Summary:**\n\\[ \\boxed{\\text{" +
               good + "}} \\]\n</answer>";
    };
}

// Teacher output for dataset construction. Summaries with "(keepbad)" keep
// a factual error (verification filter must reject); "(nobox)" yields
// malformed output (format filter must reject).
inline std::function<std::string(const ChatRequest&)> teacher_responder(
    int reasoning_sentences = 3) {
    return [reasoning_sentences](const ChatRequest& req) -> std::string {
        const std::string prompt = last_user_content(req);
        if (prompt.find("(nobox)") != std::string::npos)
            return "I could not settle on a final summary.";
        std::string good = good_summary_for_prompt(prompt);
        if (prompt.find("(keepbad)") != std::string::npos)
            good = "The result was (bad) news.";
        std::string reasoning;
        for (int i = 0; i < reasoning_sentences; ++i) {
            if (i) reasoning += " ";
            reasoning += "Step " + std::to_string(i + 1) +
                         ": weigh the feedback against the document.";
        }
        return "<think>\n" + reasoning +
               "\n</think>\n<answer>\n**Final Revised Summary:**\n\\[ \\boxed{\\text{" +
               good + "}} \\]\n</answer>";
    };
}

inline std::shared_ptr<MockChatBackend> make_mock(
    std::function<std::string(const ChatRequest&)> responder) {
    auto mock = std::make_shared<MockChatBackend>();
    mock->set_responder(std::move(responder));
    return mock;
}

}  // namespace refinery::testing
