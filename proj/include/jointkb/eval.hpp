// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/agent.hpp"
#include "jointkb/completer.hpp"
#include "jointkb/kb_store.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jointkb
{

/// 1-based rank of `gold` in `ranking`, or 0 when absent.
std::size_t rank_of(const std::vector<EntityId>& ranking, const EntityId& gold);

/// Mean reciprocal rank; a gold entity missing from its ranking contributes 0.
/// Throws ArgumentError on an empty or mismatched query set.
double mrr(const std::vector<std::vector<EntityId>>& rankings, const std::vector<EntityId>& gold);
double hits_at_k(const std::vector<std::vector<EntityId>>& rankings, const std::vector<EntityId>& gold, std::size_t k);

/// A question scores 1 when any answer matches any gold answer after normalization.
double kbqa_hits_at_1(const std::vector<std::vector<std::string>>& answers,
                      const std::vector<std::vector<std::string>>& gold);

struct KbcEvalResult
{
    double mrr = 0.0;
    std::map<std::size_t, double> hits_at;
    std::size_t n_queries = 0;
    double mean_rank = 0.0;

    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct KbcEvalOptions
{
    std::vector<std::size_t> ks { 1, 3, 10 };
    /// Remove other known true tails of (h, r, ?) before ranking.
    bool filtered = false;
    /// Triples considered true for the filtered protocol.
    const TripleSet* known = nullptr;
};

/// Tail-prediction evaluation: every test triple's tail is ranked among all KB entities.
/// Missing golds count with rank |E| + 1 towards mean_rank.
KbcEvalResult evaluate_kbc(const CompleterModel& model, const KnowledgeBase& kb, const TripleSet& test,
                           const KbcEvalOptions& options = {});

struct KbqaEvalResult
{
    double hits_at_1 = 0.0;
    double avg_llm_calls = 0.0;
    double avg_seconds = 0.0;
    std::size_t n_questions = 0;
    /// Unparseable or incomplete log lines.
    std::size_t skipped_records = 0;

    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Averages llm_call_count and wall_seconds over a trajectory log (one JSON object
/// per line). Corrupt lines are counted and skipped; no usable record is an error.
KbqaEvalResult efficiency_report(std::istream& log);
KbqaEvalResult efficiency_report(const std::filesystem::path& log);

/// Every knob of an experiment. Defaults are the standard setting.
struct RunConfig
{
    std::filesystem::path data_dir;
    std::filesystem::path run_dir;
    std::uint64_t seed = 0;

    // kb prepare
    std::filesystem::path source_triples;
    std::filesystem::path source_entities;
    std::filesystem::path source_relations;
    std::size_t n_valid = 0;
    std::size_t n_test = 0;
    double keep_fraction = 1.0;

    // completer
    std::string completer = "native";
    std::string completer_endpoint;
    std::size_t num_samples = 500;
    double completer_temperature = 1.0;
    std::size_t max_context = 20;
    TrainingConfig training;
    std::size_t samples_per_triple = 10;

    // agent and LLM
    AgentConfig agent;
    std::string llm_endpoint;
    std::string llm_model;
    std::string llm_api_key;
    std::size_t llm_concurrency = 4;
    std::filesystem::path scripted;

    /// Throws ArgumentError naming the offending field.
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

} // namespace jointkb
