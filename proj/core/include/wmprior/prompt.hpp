#pragma once

#include "wmprior/connectome.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wmprior {

enum class BasePrompt { Minimal, Reasoning, ChainOfThought, RagCitation };

struct PromptStrategy {
    BasePrompt base = BasePrompt::Minimal;
    bool uncertainty_variant = false;  // append the don't-know instruction

    friend bool operator==(const PromptStrategy&, const PromptStrategy&) = default;
};

std::string to_string(const PromptStrategy& s);
PromptStrategy strategy_from_string(const std::string& token);

enum class Role { System, User, Assistant };

std::string to_string(Role r);
Role role_from_string(const std::string& token);

struct Message {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

// System messages, if any, come first; consecutive User messages are
// conversation turns the gateway executes in one session.
using MessageSequence = std::vector<Message>;

enum class Ordering { Forward, Reverse };

std::string to_string(Ordering o);
Ordering ordering_from_string(const std::string& token);

enum class Verdict { True, False, DontKnow };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& token);

struct ContextChunk {
    std::string text;
    std::string title;
    std::string pmcid;
};

/// Prompt text with `{region1}`, `{region2}`, `{context}` placeholders.
struct TemplateSet {
    std::string minimal;
    std::string reasoning_question;
    std::string reasoning_summarise;
    std::string cot_lead;
    std::string uncertainty_suffix;
    std::string rag_system;
    std::string rag_user;
    std::string region_summary;  // used by region-context grounding

    static TemplateSet defaults();

    // Overrides defaults with any `<name>.txt` files found in `dir`.
    static TemplateSet load(const std::filesystem::path& dir);
};

class PromptEngine {
public:
    PromptEngine() : templates_(TemplateSet::defaults()) {}
    explicit PromptEngine(TemplateSet templates) : templates_(std::move(templates)) {}

    const TemplateSet& templates() const { return templates_; }

    // Scripted message sequence for one region-pair query. Reverse swaps
    // the order the two region names appear in the text; system_context,
    // when present, becomes a leading System message.
    MessageSequence render(const PromptStrategy& strategy, const RegionPair& pair,
                           Ordering ordering,
                           const std::optional<std::string>& system_context = std::nullopt) const;

    // Citation-grounded query: fixed system prompt plus a user message with
    // 1-5 retrieved chunks wrapped in <context> tags.
    MessageSequence render_rag_citation(const RegionPair& pair,
                                        const std::vector<ContextChunk>& chunks) const;

    // Summarization request used for region-context grounding.
    MessageSequence render_region_summary(const std::string& region_name,
                                          const std::vector<std::string>& chunks) const;

private:
    TemplateSet templates_;
};

// Case-insensitive match of the last recognizable verdict word; under UPV
// a don't-know match (straight, curly or missing apostrophe) yields
// DontKnow. Throws parse_error when no verdict word is found.
Verdict parse_classification(const std::string& text, bool upv);

}  // namespace wmprior
