#include "refinery/prompts.hpp"

#include <fstream>
#include <sstream>

namespace refinery {

namespace {

const char* kErrorTypes =
    "* Out-of-article Error: Facts, new information or subjective opinions not found or "
    "verifiable by the document.\n"
    "* Entity Error: Incorrect or misreferenced details about key entities such as names, "
    "dates, locations, numbers, pronouns, and events in the summary.\n"
    "* Relation Error: Misrepresented relationships, such as incorrect use of verbs, "
    "prepositions, and adjectives.\n"
    "* Sentence Error: the entire sentence entirely contradicts the information in the "
    "document.";

}  // namespace

std::string instruction_line(Dimension d, InstructionStyle style) {
    if (style == InstructionStyle::receptive) {
        switch (d) {
            case Dimension::faithfulness:
                return "- Faithfulness: reason about factual inconsistencies in the summary "
                       "sentence.";
            case Dimension::completeness:
                return "- Completeness: reason about why the summary is each missing key "
                       "content.";
            case Dimension::conciseness:
                return "- Conciseness: reason about why the summary does not contain key "
                       "content and contains unnecessary details.";
        }
    }
    switch (d) {
        case Dimension::faithfulness: {
            std::string line =
                "- Faithfulness: Does this feedback accurately identify summary sentences?";
            if (style == InstructionStyle::reflective_with_error_types)
                line += std::string("\n") + kErrorTypes;
            return line;
        }
        case Dimension::completeness:
            return "- Completeness: Does this feedback correctly identify missing key content "
                   "in the summary?";
        case Dimension::conciseness:
            return "- Conciseness: Does the feedback correctly identify sentences that include "
                   "unnecessary details and lack key content?";
    }
    throw Error("invalid dimension value");
}

std::string instruction_block(const DimOrder& order, InstructionStyle style) {
    std::string out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) out += "\n";
        out += instruction_line(order[i], style);
    }
    return out;
}

std::filesystem::path PromptLibrary::default_asset_dir() {
    return std::filesystem::path(REFINERY_ASSET_DIR) / "prompts";
}

PromptLibrary::PromptLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

const std::string& PromptLibrary::raw(const std::string& name) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;

    std::ifstream in(dir_ / (name + ".txt"), std::ios::binary);
    if (!in) throw Error("missing prompt template: " + name);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return cache_.emplace(name, std::move(text)).first->second;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& slots) const {
    return fill_placeholders(raw(name), slots);
}

std::string fill_placeholders(const std::string& text,
                              const std::map<std::string, std::string>& slots) {
    std::string out = text;
    for (const auto& [key, value] : slots) {
        const std::string token = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(token, pos)) != std::string::npos) {
            out.replace(pos, token.size(), value);
            pos += value.size();
        }
    }
    return out;
}

}  // namespace refinery
