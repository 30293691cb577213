#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>

#include "refinery/core.hpp"

namespace refinery {

// Per-dimension reasoning instruction lines injected into templates.
// `receptive` lines ask the model to act on the feedback as given;
// `reflective` lines ask it to judge feedback validity first. The
// error-type variant appends the four factual inconsistency types to the
// reflective faithfulness line (used by the teacher generation prompt).
enum class InstructionStyle { receptive, reflective, reflective_with_error_types };

std::string instruction_line(Dimension d, InstructionStyle style);

// Lines for all three dimensions in `order`, joined by newlines.
std::string instruction_block(const DimOrder& order, InstructionStyle style);

// Loads prompt templates from the asset directory and fills named
// placeholders such as {document}. Only exact placeholder tokens are
// replaced; literal braces elsewhere in a template stay untouched.
class PromptLibrary {
public:
    explicit PromptLibrary(std::filesystem::path dir = default_asset_dir());

    // Raw template text (trailing newline stripped). Throws Error when the
    // template file is missing.
    const std::string& raw(const std::string& name) const;

    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& slots) const;

    static std::filesystem::path default_asset_dir();

private:
    std::filesystem::path dir_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::string> cache_;
};

// Replaces each "{key}" token from `slots` in `text`.
std::string fill_placeholders(const std::string& text,
                              const std::map<std::string, std::string>& slots);

}  // namespace refinery
