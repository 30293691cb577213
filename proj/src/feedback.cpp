#include "refinery/feedback.hpp"

#include <algorithm>
#include <set>

#include "refinery/rng.hpp"

namespace refinery {

// ---------------------------------------------------------------------------
// Order policies
// ---------------------------------------------------------------------------

OrderPolicy OrderPolicy::fixed_policy(DimOrder order) {
    OrderPolicy p;
    p.kind = Kind::fixed;
    p.perm = order;
    return p;
}

OrderPolicy OrderPolicy::random(std::uint64_t seed) {
    OrderPolicy p;
    p.kind = Kind::random_per_sample;
    p.seed = seed;
    return p;
}

OrderPolicy OrderPolicy::last_fixed(Dimension d, std::uint64_t seed) {
    OrderPolicy p;
    p.kind = Kind::last_fixed;
    p.last = d;
    p.seed = seed;
    return p;
}

std::string OrderPolicy::label() const {
    switch (kind) {
        case Kind::fixed: return "fixed:" + order_to_string(perm);
        case Kind::random_per_sample: return "random";
        case Kind::last_fixed: return "last:" + dimension_name(last);
    }
    throw Error("invalid order policy kind");
}

OrderPolicy order_policy_from_string(const std::string& text, std::uint64_t seed) {
    if (text == "fixed") {
        return OrderPolicy::fixed_policy(default_order());
    }
    if (text.rfind("fixed:", 0) == 0) {
        return OrderPolicy::fixed_policy(order_from_string(text.substr(6)));
    }
    if (text == "random" || text == "shuffle") {
        return OrderPolicy::random(seed);
    }
    if (text.rfind("last:", 0) == 0) {
        return OrderPolicy::last_fixed(dimension_from_name(text.substr(5)), seed);
    }
    if (text.rfind("last-", 0) == 0) {
        return OrderPolicy::last_fixed(dimension_from_name(text.substr(5)), seed);
    }
    throw ConfigError("unknown order policy: " + text +
                      " (valid: fixed, fixed:<order>, random, last:<dimension>)");
}

DimOrder choose_order(const OrderPolicy& policy, std::uint64_t sample_index) {
    switch (policy.kind) {
        case OrderPolicy::Kind::fixed:
            return policy.perm;
        case OrderPolicy::Kind::random_per_sample: {
            CounterRng rng(policy.seed, sample_index);
            return all_orders()[rng.below(6)];
        }
        case OrderPolicy::Kind::last_fixed: {
            CounterRng rng(policy.seed, sample_index);
            std::array<DimOrder, 2> ending{};
            std::size_t found = 0;
            for (const auto& order : all_orders())
                if (order[2] == policy.last) ending[found++] = order;
            return ending[rng.below(2)];
        }
    }
    throw Error("invalid order policy kind");
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

FeedbackLabels labels_from_eval(const std::vector<FactCheckVerdict>& verdicts,
                                const std::vector<AlignmentEdge>& edges, std::size_t n,
                                std::size_t m) {
    if (verdicts.size() != n)
        throw Error("verdict count " + std::to_string(verdicts.size()) +
                    " does not match sentence count " + std::to_string(n));
    if (edges.size() != m)
        throw Error("edge count " + std::to_string(edges.size()) +
                    " does not match key-fact count " + std::to_string(m));

    FeedbackLabels labels;
    labels.faith.resize(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        labels.faith[i] = (verdicts[i].category != ErrorCategory::no_error) ? 1 : 0;

    labels.comp.resize(m, 0);
    std::set<int> cited;
    for (std::size_t j = 0; j < m; ++j) {
        labels.comp[j] = edges[j].matched ? 0 : 1;
        for (int line : edges[j].line_numbers)
            if (line >= 1 && static_cast<std::size_t>(line) <= n) cited.insert(line);
    }

    labels.conc.resize(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        labels.conc[i] = cited.count(static_cast<int>(i) + 1) ? 0 : 1;
    return labels;
}

DimensionScores scores_from_labels(const FeedbackLabels& labels) {
    auto one_minus_mean = [](const std::vector<int>& v) {
        if (v.empty()) throw UndefinedScoreError("score undefined for empty label vector");
        long flagged = 0;
        for (int x : v) flagged += x;
        return 1.0 - static_cast<double>(flagged) / static_cast<double>(v.size());
    };
    DimensionScores s;
    s.faithfulness = one_minus_mean(labels.faith);
    s.completeness = one_minus_mean(labels.comp);
    s.conciseness = one_minus_mean(labels.conc);
    return s;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

std::string header_for(Dimension d) {
    switch (d) {
        case Dimension::faithfulness: return "***Faithfulness Feedback***";
        case Dimension::completeness: return "***Completeness Feedback***";
        case Dimension::conciseness: return "***Conciseness Feedback***";
    }
    throw Error("invalid dimension value");
}

std::string intro_for(Dimension d) {
    switch (d) {
        case Dimension::faithfulness:
            return "These summary sentences are factually inconsistent with the Document:";
        case Dimension::completeness:
            return "These key contents are missing in the summary:";
        case Dimension::conciseness:
            return "These summary sentences do not contain key content:";
    }
    throw Error("invalid dimension value");
}

}  // namespace

std::string render_dimension_block(Dimension d, const FeedbackLabels& labels,
                                   const SummaryRecord& summary, const KeyFactSet& keyfacts) {
    const std::vector<int>& flags =
        (d == Dimension::completeness) ? labels.comp
                                       : (d == Dimension::faithfulness ? labels.faith : labels.conc);
    const std::size_t expected =
        (d == Dimension::completeness) ? keyfacts.facts.size() : summary.sentences.size();
    if (flags.size() != expected)
        throw Error(dimension_name(d) + " label vector length " + std::to_string(flags.size()) +
                    " does not match item count " + std::to_string(expected));

    std::string out = header_for(d) + "\n" + intro_for(d);
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (!flags[i]) continue;
        ++flagged;
        if (d == Dimension::completeness) {
            out += "\n- Missing key content " + std::to_string(flagged) + ": " + keyfacts.facts[i];
        } else {
            out += "\n- Sentence " + std::to_string(i + 1) + ": " + summary.sentences[i];
        }
    }
    if (flagged == 0) out += "\n- none";
    return out;
}

FeedbackText render_feedback(const FeedbackLabels& labels, const SummaryRecord& summary,
                             const KeyFactSet& keyfacts, const DimOrder& order) {
    FeedbackText text;
    text.order = order;
    for (std::size_t i = 0; i < order.size(); ++i)
        text.blocks[i] = render_dimension_block(order[i], labels, summary, keyfacts);
    return text;
}

std::string FeedbackText::full() const {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += "\n\n";
        out += blocks[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

ParsedFeedback parse_feedback_text(const std::string& text) {
    ParsedFeedback out;
    std::optional<Dimension> current;

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        if (eol == text.size()) break;
        pos = eol + 1;
    }

    for (const std::string& line : lines) {
        if (line.empty()) continue;

        bool was_header = false;
        for (Dimension d : default_order()) {
            if (line == header_for(d)) {
                current = d;
                out.block_present[static_cast<std::size_t>(d)] = true;
                out.block_order.push_back(d);
                was_header = true;
                break;
            }
        }
        if (was_header || !current) continue;
        if (line.rfind("- ", 0) != 0) continue;

        const std::string body = line.substr(2);
        if (body == "none") continue;
        if (*current == Dimension::completeness) {
            const std::string tag = "Missing key content ";
            if (body.rfind(tag, 0) == 0) {
                std::size_t colon = body.find(": ", tag.size());
                if (colon != std::string::npos)
                    out.missing_contents.push_back(body.substr(colon + 2));
            }
        } else {
            const std::string tag = "Sentence ";
            if (body.rfind(tag, 0) == 0) {
                std::size_t colon = body.find(':', tag.size());
                if (colon == std::string::npos) continue;
                try {
                    const int idx = std::stoi(body.substr(tag.size(), colon - tag.size()));
                    if (*current == Dimension::faithfulness)
                        out.faith_flagged.push_back(idx);
                    else
                        out.conc_flagged.push_back(idx);
                } catch (const std::exception&) {
                    // malformed index; skip the bullet
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Whole-record evaluation
// ---------------------------------------------------------------------------

EvalBundle evaluate_summary(const Evaluator& evaluator, const Document& doc,
                            const SummaryRecord& summary, const KeyFactSet& keyfacts,
                            ChatBackend& backend) {
    EvalBundle bundle;
    FactCheckResult fc = evaluator.fact_check(doc, summary, backend);
    AlignmentResult al = evaluator.align_key_facts(summary, keyfacts, backend);
    bundle.verdicts = std::move(fc.verdicts);
    bundle.edges = std::move(al.edges);
    bundle.warnings = std::move(al.warnings);

    const std::size_t n = summary.sentences.size();
    const std::size_t m = keyfacts.facts.size();
    bundle.labels = labels_from_eval(bundle.verdicts, bundle.edges, n, m);
    bundle.scores.faithfulness = score_faithfulness(bundle.verdicts, n);
    auto [comp, conc] = score_alignment(bundle.edges, m, n);
    bundle.scores.completeness = comp;
    bundle.scores.conciseness = conc;
    return bundle;
}

}  // namespace refinery
