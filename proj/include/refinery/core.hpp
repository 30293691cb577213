#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refinery/errors.hpp"

namespace refinery {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Quality dimensions
// ---------------------------------------------------------------------------

enum class Dimension { faithfulness, completeness, conciseness };

using DimOrder = std::array<Dimension, 3>;

// Default presentation order: faithfulness, completeness, conciseness.
DimOrder default_order();

std::string dimension_name(Dimension d);
Dimension dimension_from_name(const std::string& name);

// All six permutations in a fixed canonical order.
const std::array<DimOrder, 6>& all_orders();

std::string order_to_string(const DimOrder& order);
DimOrder order_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Binary feedback labels
// ---------------------------------------------------------------------------

// Per-sentence / per-key-fact 0-1 labels. faith and conc have one entry per
// summary sentence (1 = flagged), comp has one entry per key fact
// (1 = missing from the summary).
struct FeedbackLabels {
    std::vector<int> faith;
    std::vector<int> comp;
    std::vector<int> conc;

    bool operator==(const FeedbackLabels&) const = default;
};

json labels_to_json(const FeedbackLabels& labels);
FeedbackLabels labels_from_json(const json& j);

// ---------------------------------------------------------------------------
// Corpus records
// ---------------------------------------------------------------------------

struct Document {
    std::string id;
    std::string text;
    std::string domain;
    std::string format;
    json extra = json::object();  // unrecognized fields, preserved on save

    bool operator==(const Document&) const = default;
};

struct SummaryRecord {
    std::string doc_id;
    std::string summarizer;
    std::vector<std::string> sentences;
    bool stored_as_text = false;  // loaded from a "text" field, saved back as one
    json extra = json::object();

    // Sentences joined by single spaces.
    std::string text() const;

    bool operator==(const SummaryRecord&) const = default;
};

struct KeyFactSet {
    std::string doc_id;
    std::vector<std::string> facts;
    json extra = json::object();

    bool operator==(const KeyFactSet&) const = default;
};

// One document with its attached summaries and optional key facts,
// in file order.
struct CorpusGroup {
    Document doc;
    std::vector<SummaryRecord> summaries;
    std::optional<KeyFactSet> keyfacts;
};

struct Corpus {
    std::vector<CorpusGroup> groups;

    const CorpusGroup* find(const std::string& doc_id) const;
    std::size_t summary_count() const;
};

// Loads a JSONL corpus. Errors name the offending 1-based line.
Corpus load_corpus(const std::filesystem::path& path);

// Writes the corpus back as JSONL, one record per line, preserving unknown
// fields and the document / summary / keyfacts grouping order.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

json document_to_json(const Document& d);
json summary_to_json(const SummaryRecord& s);
json keyfacts_to_json(const KeyFactSet& k);
Document document_from_json(const json& j);
SummaryRecord summary_from_json(const json& j);
KeyFactSet keyfacts_from_json(const json& j);

// ---------------------------------------------------------------------------
// Sentence segmentation
// ---------------------------------------------------------------------------

// Deterministic rule-based splitter. A sentence boundary is a run of
// terminal punctuation followed by whitespace and an uppercase letter,
// digit, or opening quote/bracket. Common abbreviations (Dr., e.g., U.S.)
// and initials do not end a sentence. Whitespace inside sentences is
// collapsed to single spaces; whitespace-only input yields no sentences.
std::vector<std::string> segment_sentences(const std::string& text);

// ---------------------------------------------------------------------------
// JSONL result IO
// ---------------------------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path);

// Append-only writer; creates parent directories. Throws Error when the
// path cannot be opened.
void save_results(const std::vector<json>& records, const std::filesystem::path& path,
                  bool append = false);

}  // namespace refinery
