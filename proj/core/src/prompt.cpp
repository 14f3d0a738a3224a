#include "wmprior/prompt.hpp"

#include "wmprior/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace wmprior {

namespace {

const char* kMinimal =
    "Is there a white matter bundle connecting the {region1} and the {region2} in the "
    "human brain? Return your answer as a Boolean: reply with True or False only.";

const char* kReasoningQuestion =
    "Is there a white matter bundle connecting the {region1} and the {region2} in the "
    "human brain? Give a long-form text answer describing the relevant anatomy and any "
    "white matter pathways involved.";

const char* kReasoningSummarise =
    "Now summarise your answer as True or False. Reply with True or False only.";

const char* kCotLead =
    "Consider each of the relevant brain regions, the {region1} and the {region2}, "
    "and their white matter connectivity patterns.";

const char* kUncertaintySuffix = " If you don't know, write 'don't know'.";

const char* kRagSystem =
    "You will be presented with the names of a pair of brain regions and some snippets "
    "from the scientific literature.\n\n"
    "Your task is to determine if the brain regions are connected by white matter fibers "
    "in humans, based on the text you are shown.\n\n"
    "Approach the task step-by-step: Identify which snippets come from HUMAN studies. "
    "Discard any snippets that mention animals. Are the relevant brain regions described "
    "in the text? Does the text provide evidence for a white matter connection between "
    "the two regions?\n\n"
    "If there is relevant information in the text, extract a json with keys as follows:\n"
    "- connection: allowable values are 'True', 'False' or 'don't know'\n"
    "- evidence: contains any quotes from the text that support your assertion.\n"
    "- citations: a list of dictionaries, each with 'title': title of the referenced "
    "paper, and 'pmcid': the pubmed central ID of the relevant snippet\n\n"
    "Return your answer as a json object with the keys 'connection', 'evidence', and "
    "'citations'";

const char* kRagUser =
    "Are these brain regions connected by white matter fibres within a hemisphere: "
    "{region1}, {region2}? The connection can be in either direction.\n\n"
    "Text snippets: {context}\n\n"
    "Remember you are looking for a white matter connection between {region1} and "
    "{region2}.\n"
    "Return your answer as a JSON object with the keys 'connection', 'evidence' and "
    "'citations'. Return a JSON only and no other text.";

const char* kRegionSummary =
    "Use the following text snippets to summarise the location of the brain region "
    "{region1} in one or two sentences.\n\n{context}";

std::string replace_all(std::string text, const std::string& placeholder,
                        const std::string& value) {
    size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

std::string fill_regions(const std::string& tmpl, const std::string& r1, const std::string& r2) {
    return replace_all(replace_all(tmpl, "{region1}", r1), "{region2}", r2);
}

std::optional<std::string> read_template_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
}

}  // namespace

std::string to_string(const PromptStrategy& s) {
    std::string base;
    switch (s.base) {
        case BasePrompt::Minimal: base = "minimal"; break;
        case BasePrompt::Reasoning: base = "reasoning"; break;
        case BasePrompt::ChainOfThought: base = "chain_of_thought"; break;
        case BasePrompt::RagCitation: base = "rag_citation"; break;
    }
    return s.uncertainty_variant ? base + "+upv" : base;
}

PromptStrategy strategy_from_string(const std::string& token) {
    PromptStrategy s;
    std::string t = token;
    if (t.size() > 4 && t.substr(t.size() - 4) == "+upv") {
        s.uncertainty_variant = true;
        t = t.substr(0, t.size() - 4);
    }
    if (t == "minimal") s.base = BasePrompt::Minimal;
    else if (t == "reasoning") s.base = BasePrompt::Reasoning;
    else if (t == "chain_of_thought" || t == "cot") s.base = BasePrompt::ChainOfThought;
    else if (t == "rag_citation") s.base = BasePrompt::RagCitation;
    else throw data_error("unknown prompt strategy: '" + token + "'");
    return s;
}

std::string to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& token) {
    if (token == "system") return Role::System;
    if (token == "user") return Role::User;
    if (token == "assistant") return Role::Assistant;
    throw data_error("unknown message role: '" + token + "'");
}

std::string to_string(Ordering o) {
    return o == Ordering::Forward ? "forward" : "reverse";
}

Ordering ordering_from_string(const std::string& token) {
    if (token == "forward") return Ordering::Forward;
    if (token == "reverse") return Ordering::Reverse;
    throw data_error("unknown ordering: '" + token + "'");
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::True: return "true";
        case Verdict::False: return "false";
        case Verdict::DontKnow: return "dont_know";
    }
    return "false";
}

Verdict verdict_from_string(const std::string& token) {
    if (token == "true") return Verdict::True;
    if (token == "false") return Verdict::False;
    if (token == "dont_know") return Verdict::DontKnow;
    throw data_error("unknown verdict: '" + token + "'");
}

TemplateSet TemplateSet::defaults() {
    TemplateSet t;
    t.minimal = kMinimal;
    t.reasoning_question = kReasoningQuestion;
    t.reasoning_summarise = kReasoningSummarise;
    t.cot_lead = kCotLead;
    t.uncertainty_suffix = kUncertaintySuffix;
    t.rag_system = kRagSystem;
    t.rag_user = kRagUser;
    t.region_summary = kRegionSummary;
    return t;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet t = defaults();
    auto maybe = [&dir](const char* name, std::string& slot) {
        if (auto text = read_template_file(dir / (std::string(name) + ".txt"))) slot = *text;
    };
    maybe("minimal", t.minimal);
    maybe("reasoning_question", t.reasoning_question);
    maybe("reasoning_summarise", t.reasoning_summarise);
    maybe("cot_lead", t.cot_lead);
    maybe("uncertainty_suffix", t.uncertainty_suffix);
    maybe("rag_system", t.rag_system);
    maybe("rag_user", t.rag_user);
    maybe("region_summary", t.region_summary);
    return t;
}

MessageSequence PromptEngine::render(const PromptStrategy& strategy, const RegionPair& pair,
                                     Ordering ordering,
                                     const std::optional<std::string>& system_context) const {
    if (strategy.base == BasePrompt::RagCitation)
        throw config_error("rag_citation prompts are rendered via render_rag_citation");

    const std::string& r1 = ordering == Ordering::Forward ? pair.a : pair.b;
    const std::string& r2 = ordering == Ordering::Forward ? pair.b : pair.a;

    MessageSequence out;
    if (system_context && !system_context->empty())
        out.push_back({Role::System, *system_context});

    const std::string upv = strategy.uncertainty_variant ? templates_.uncertainty_suffix : "";
    switch (strategy.base) {
        case BasePrompt::Minimal:
            out.push_back({Role::User, fill_regions(templates_.minimal, r1, r2) + upv});
            break;
        case BasePrompt::Reasoning:
            out.push_back({Role::User, fill_regions(templates_.reasoning_question, r1, r2)});
            out.push_back({Role::User, templates_.reasoning_summarise + upv});
            break;
        case BasePrompt::ChainOfThought:
            // One opening turn covering the region walk-through plus the
            // long-form question, then the summary turn.
            out.push_back({Role::User, fill_regions(templates_.cot_lead, r1, r2) + "\n\n" +
                                           fill_regions(templates_.reasoning_question, r1, r2)});
            out.push_back({Role::User, templates_.reasoning_summarise + upv});
            break;
        case BasePrompt::RagCitation:
            break;
    }
    return out;
}

MessageSequence PromptEngine::render_rag_citation(const RegionPair& pair,
                                                  const std::vector<ContextChunk>& chunks) const {
    if (chunks.empty()) throw config_error("render_rag_citation requires at least one chunk");
    if (chunks.size() > 5)
        throw config_error("render_rag_citation accepts at most 5 chunks");
    std::string context;
    for (const ContextChunk& c : chunks) {
        context += "<context>\n[Title: " + c.title + " | PMCID: " + c.pmcid + "]\n" + c.text +
                   "\n</context>\n";
    }
    MessageSequence out;
    out.push_back({Role::System, templates_.rag_system});
    out.push_back({Role::User, replace_all(fill_regions(templates_.rag_user, pair.a, pair.b),
                                           "{context}", context)});
    return out;
}

MessageSequence PromptEngine::render_region_summary(const std::string& region_name,
                                                    const std::vector<std::string>& chunks) const {
    std::string context;
    for (const std::string& c : chunks) context += "<context>\n" + c + "\n</context>\n";
    MessageSequence out;
    out.push_back({Role::User, replace_all(fill_regions(templates_.region_summary, region_name, ""),
                                           "{context}", context)});
    return out;
}

Verdict parse_classification(const std::string& text, bool upv) {
    // Normalize: lowercase, curly apostrophes to straight.
    std::string norm;
    norm.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c == 0xe2 && i + 2 < text.size() &&
            static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            (static_cast<unsigned char>(text[i + 2]) == 0x98 ||
             static_cast<unsigned char>(text[i + 2]) == 0x99)) {
            norm += '\'';
            i += 2;
        } else {
            norm += static_cast<char>(std::tolower(c));
        }
    }

    // Word = run of [a-z0-9'], apostrophes at word edges stripped.
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        while (!cur.empty() && cur.front() == '\'') cur.erase(cur.begin());
        while (!cur.empty() && cur.back() == '\'') cur.pop_back();
        if (!cur.empty()) words.push_back(cur);
        cur.clear();
    };
    for (char c : norm) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') cur += c;
        else flush();
    }
    flush();

    std::optional<Verdict> found;
    for (size_t i = 0; i < words.size(); ++i) {
        if (words[i] == "true") found = Verdict::True;
        else if (words[i] == "false") found = Verdict::False;
        else if (upv && words[i] == "know" && i > 0 &&
                 (words[i - 1] == "don't" || words[i - 1] == "dont"))
            found = Verdict::DontKnow;
    }
    if (!found) throw parse_error("no verdict found in model output: '" + text + "'");
    return *found;
}

}  // namespace wmprior
