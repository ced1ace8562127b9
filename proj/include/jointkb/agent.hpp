// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/completer.hpp"
#include "jointkb/kb_store.hpp"
#include "jointkb/llm_backend.hpp"
#include "jointkb/text_retrieval.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jointkb
{

enum class ActionKind
{
    search,
    generate,
    complete,
    finish,
};

std::string_view to_string(ActionKind kind);

/// search: entity surfaces; generate: one sub-question; complete: (entity, relation);
/// finish: answer surfaces, possibly the single token "unknown".
struct AgentAction
{
    ActionKind kind = ActionKind::finish;
    std::vector<std::string> arguments;

    /// "Search[a | b]" form, as shown back to the LLM.
    [[nodiscard]] std::string render() const;

    friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

/// Parses "Keyword[arg1 | arg2 | ...]". The keyword is case-insensitive, the
/// payload runs from the first '[' to the last ']' and a trailing period is
/// tolerated. Throws ParseError on anything else.
AgentAction parse_action(std::string_view text);

/// A triple as the agent saw it. `ids` is set when every part resolves in the KB;
/// `relation_linked` is false for LLM-generated relations that matched nothing.
struct ObservedTriple
{
    SurfaceTriple text;
    std::optional<Triple> ids;
    bool relation_linked = true;

    friend bool operator==(const ObservedTriple&, const ObservedTriple&) = default;
};

struct Observation
{
    std::vector<ObservedTriple> triples;
    /// Set only for a train-mode finish.
    std::optional<std::vector<std::string>> verified_answers;
    /// Diagnostics shown to the LLM, e.g. "entity not found: X".
    std::vector<std::string> notes;

    [[nodiscard]] std::string render() const;
};

struct TrajectoryStep
{
    std::size_t index = 0;
    std::string thought;
    /// Absent when the LLM produced no parseable action even after a re-prompt.
    std::optional<AgentAction> action;
    Observation observation;
    /// Template of every LLM call made during this step, in call order.
    std::vector<TemplateId> calls;
    double seconds = 0.0;
};

enum class AgentMode
{
    train,
    infer,
};

enum class Termination
{
    finish,
    /// L thoughts without a finish.
    max_steps,
    /// The L * N call ceiling was reached.
    budget,
    /// No topic entities; answered by the chain-of-thought prompt.
    fallback,
    /// A transport failure cut the episode short.
    error,
};

std::string_view to_string(AgentMode mode);
std::string_view to_string(Termination termination);

struct Trajectory
{
    std::string question;
    std::vector<EntityId> topic_entities;
    std::vector<std::string> gold_answers;
    AgentMode mode = AgentMode::infer;
    std::vector<TrajectoryStep> steps;
    /// Finish payload, or ["unknown"] when the episode ended any other way.
    std::vector<std::string> final_answers;
    /// Train mode: final_answers that match a gold answer.
    std::vector<std::string> verified_answers;
    std::size_t llm_call_count = 0;
    Termination termination = Termination::max_steps;
    std::string error;
    double wall_seconds = 0.0;
};

/// Canonical form omits timing so that scripted replays serialize byte-identically;
/// the log form adds wall time per step and per episode.
nlohmann::json to_json(const Trajectory& trajectory, bool include_timing = false);

struct AgentConfig
{
    /// L: maximum thought/action/observation steps.
    std::size_t max_steps = 10;
    /// N: per-step call allowance; the episode ceiling is L * N.
    std::size_t max_llm_calls_per_step = 2;
    std::size_t complete_top_k = 5;
    std::size_t relations_per_search = 3;
    std::size_t search_triple_cap = 30;
    std::size_t generate_known_triples = 8;
    LlmParams llm;

    [[nodiscard]] std::size_t call_budget() const noexcept { return max_steps * max_llm_calls_per_step; }
    /// Throws ArgumentError if any limit is zero.
    void validate() const;
};

/// Normalized answer comparison shared by finish filtering and KBQA scoring.
bool answers_match(std::string_view a, std::string_view b);

/// Splits one generated line ("1. head, relation, tail") into surface parts.
/// Labels may themselves contain ", "; when the line has more than three
/// comma-separated parts the split whose middle matches a KB relation label wins.
std::optional<SurfaceTriple> parse_triple_line(std::string_view line, const KnowledgeBase& kb);

/// Parses every triple-looking line of an LLM reply; header lines and quote fences
/// are skipped, other non-triple lines are reported through `rejected`.
std::vector<SurfaceTriple> parse_triple_lines(std::string_view reply, const KnowledgeBase& kb,
                                              std::vector<std::string>* rejected = nullptr);

/// The last "Answer: a | b" line of a chain-of-thought reply; ["unknown"] if absent.
std::vector<std::string> parse_cot_answers(std::string_view reply);

class Agent
{
  public:
    /// The agent reads `kb` and `completer` at each episode, so updates made between
    /// episodes (new symbols, fine-tuning) are picked up.
    Agent(const KnowledgeBase& kb, const CompleterModel& completer, LlmBackend& llm, AgentConfig config = {});

    /// Train mode iff `gold_answers` is present.
    Trajectory run_episode(std::string_view question, const std::vector<EntityId>& topic_entities,
                           const std::optional<std::vector<std::string>>& gold_answers = std::nullopt);

    [[nodiscard]] const AgentConfig& config() const noexcept { return _config; }

  private:
    const KnowledgeBase* _kb;
    const CompleterModel* _completer;
    LlmBackend* _llm;
    AgentConfig _config;
};

} // namespace jointkb
