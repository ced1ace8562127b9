// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/agent.hpp"
#include "jointkb/completer.hpp"
#include "jointkb/kb_store.hpp"
#include "jointkb/llm_backend.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jointkb
{

struct QaExample
{
    std::string question;
    std::vector<EntityId> topic_entities;
    std::vector<std::string> gold_answers;
};

/// JSON lines: {"question", "topic_entities": [ids], "answers": [labels]}.
/// `answers` may be absent or empty for unlabelled test questions.
std::vector<QaExample> load_qa(const std::filesystem::path& path);

/// G_q: observation triples indexed by normalized node label. Edges are
/// traversed in both directions.
class ReasoningSubgraph
{
  public:
    explicit ReasoningSubgraph(std::vector<ObservedTriple> triples);

    [[nodiscard]] const std::vector<ObservedTriple>& triples() const noexcept { return _triples; }
    [[nodiscard]] bool has_node(std::string_view label) const;
    /// Indices of the triples touching `label`, in triple order.
    [[nodiscard]] std::vector<std::size_t> incident(std::string_view label) const;

    struct Edge
    {
        std::string neighbor;
        std::size_t triple;
    };
    /// Neighbors ordered by (neighbor label, relation label, triple index).
    [[nodiscard]] const std::vector<Edge>& edges(const std::string& node) const;

  private:
    std::vector<ObservedTriple> _triples;
    std::map<std::string, std::vector<Edge>> _adjacency;
};

/// Shortest undirected path from `source` to `target` as triple indices into the
/// subgraph, in traversal order. Among equally short paths the one with the
/// lexicographically smallest node sequence wins. Absent when unreachable;
/// empty when source and target coincide.
std::optional<std::vector<std::size_t>> bfs_witness(const ReasoningSubgraph& graph, std::string_view source,
                                                    std::string_view target);

struct ReasoningPath
{
    std::string source_question;
    /// Identifier form, ready for fine-tuning.
    std::vector<Triple> triples;
    std::vector<SurfaceTriple> surface;
    /// Entities registered in the KB while accepting this path.
    std::vector<EntityId> new_entities;
    std::vector<std::string> notes;
};

/// Observation triples that survive answer filtering, deduplicated, in trajectory order.
std::vector<ObservedTriple> surviving_triples(const Trajectory& trajectory);

/// Turns a train-mode trajectory into fine-tuning triples. Entities named only by
/// LLM-generated triples are added to `kb` as "gen:<label>" with empty descriptions.
ReasoningPath parse_reasoning_paths(const Trajectory& trajectory, KnowledgeBase& kb, LlmBackend& llm,
                                    const LlmParams& params = {});

struct JointConfig
{
    AgentConfig agent;
    TrainingConfig training;
    std::size_t samples_per_triple = 10;
    /// When set, trajectories.jsonl, paths.jsonl, progress.json and (for the native
    /// completer) completer.json are written here after every question.
    std::optional<std::filesystem::path> run_dir;
    /// Skip questions already recorded in run_dir/progress.json and restore the
    /// completer checkpoint and registered entities.
    bool resume = false;
};

struct JointReport
{
    std::size_t questions = 0;
    std::size_t completed = 0;
    std::size_t skipped = 0;
    std::size_t resumed = 0;
    std::size_t finetune_calls = 0;
    std::size_t path_triples = 0;
    std::vector<ReasoningPath> paths;
};

/// Episode, path parsing and replay fine-tuning for each question in order. The
/// completer must already be pretrained. Per-question failures are logged and skipped.
JointReport train_joint(KnowledgeBase& kb, const std::vector<QaExample>& questions, CompleterModel& completer,
                        ReplayMemory& memory, LlmBackend& llm, const JointConfig& config);

} // namespace jointkb
