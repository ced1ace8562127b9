// SPDX-License-Identifier: Apache-2.0
#include "jointkb/eval.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace jointkb
{

namespace
{

void check_queries(const std::vector<std::vector<EntityId>>& rankings, const std::vector<EntityId>& gold)
{
    if (rankings.empty())
        throw ArgumentError("metric needs at least one query");
    if (rankings.size() != gold.size())
        throw ArgumentError(
            fmt::format("{} rankings but {} gold entities", rankings.size(), gold.size()));
}

} // namespace

std::size_t rank_of(const std::vector<EntityId>& ranking, const EntityId& gold)
{
    auto it = std::find(ranking.begin(), ranking.end(), gold);
    return it == ranking.end() ? 0 : static_cast<std::size_t>(it - ranking.begin()) + 1;
}

double mrr(const std::vector<std::vector<EntityId>>& rankings, const std::vector<EntityId>& gold)
{
    check_queries(rankings, gold);
    double sum = 0.0;
    for (std::size_t i = 0; i < rankings.size(); ++i)
        if (auto const r = rank_of(rankings[i], gold[i]); r > 0)
            sum += 1.0 / static_cast<double>(r);
    return sum / static_cast<double>(rankings.size());
}

double hits_at_k(const std::vector<std::vector<EntityId>>& rankings, const std::vector<EntityId>& gold, std::size_t k)
{
    check_queries(rankings, gold);
    if (k == 0)
        throw ArgumentError("hits@k needs k >= 1");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rankings.size(); ++i)
        if (auto const r = rank_of(rankings[i], gold[i]); r > 0 && r <= k)
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double kbqa_hits_at_1(const std::vector<std::vector<std::string>>& answers,
                      const std::vector<std::vector<std::string>>& gold)
{
    if (answers.empty())
        throw ArgumentError("Hits@1 needs at least one question");
    if (answers.size() != gold.size())
        throw ArgumentError(fmt::format("{} answer lists but {} gold lists", answers.size(), gold.size()));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < answers.size(); ++i)
    {
        bool const hit = std::any_of(answers[i].begin(), answers[i].end(), [&](const std::string& a) {
            return std::any_of(gold[i].begin(), gold[i].end(), [&](const std::string& g) { return answers_match(a, g); });
        });
        hits += hit ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(answers.size());
}

std::string KbcEvalResult::to_text() const
{
    std::string out = fmt::format("n_queries: {}\nmrr: {:.6f}\n", n_queries, mrr);
    for (auto const& [k, v]: hits_at)
        out += fmt::format("hits@{}: {:.6f}\n", k, v);
    out += fmt::format("mean_rank: {:.3f}\n", mean_rank);
    return out;
}

nlohmann::json KbcEvalResult::to_json() const
{
    nlohmann::json hits = nlohmann::json::object();
    for (auto const& [k, v]: hits_at)
        hits[std::to_string(k)] = v;
    return { { "n_queries", n_queries }, { "mrr", mrr }, { "hits_at", hits }, { "mean_rank", mean_rank } };
}

KbcEvalResult evaluate_kbc(const CompleterModel& model, const KnowledgeBase& kb, const TripleSet& test,
                           const KbcEvalOptions& options)
{
    if (test.empty())
        throw ArgumentError("evaluation set is empty");
    if (options.filtered && !options.known)
        throw ArgumentError("filtered evaluation needs the set of known triples");

    std::vector<std::vector<EntityId>> rankings;
    std::vector<EntityId> gold;
    double rank_sum = 0.0;
    auto const n_entities = kb.entities().size();
    for (auto const& t: test)
    {
        std::vector<EntityId> ranking;
        for (auto const& p: model.predict(CompletionQuery::for_tail(t.head, t.relation), kb, n_entities))
        {
            if (options.filtered && p.entity != t.tail && options.known->contains(Triple { t.head, t.relation, p.entity }))
                continue;
            ranking.push_back(p.entity);
        }
        auto const r = rank_of(ranking, t.tail);
        rank_sum += r > 0 ? static_cast<double>(r) : static_cast<double>(n_entities + 1);
        rankings.push_back(std::move(ranking));
        gold.push_back(t.tail);
    }

    KbcEvalResult result;
    result.n_queries = test.size();
    result.mrr = mrr(rankings, gold);
    for (auto k: options.ks)
        result.hits_at[k] = hits_at_k(rankings, gold, k);
    result.mean_rank = rank_sum / static_cast<double>(test.size());
    return result;
}

std::string KbqaEvalResult::to_text() const
{
    return fmt::format("n_questions: {}\nhits@1: {:.6f}\navg_llm_calls: {:.3f}\navg_seconds: {:.3f}\n"
                       "skipped_records: {}\n",
                       n_questions, hits_at_1, avg_llm_calls, avg_seconds, skipped_records);
}

nlohmann::json KbqaEvalResult::to_json() const
{
    return { { "n_questions", n_questions },
             { "hits_at_1", hits_at_1 },
             { "avg_llm_calls", avg_llm_calls },
             { "avg_seconds", avg_seconds },
             { "skipped_records", skipped_records } };
}

KbqaEvalResult efficiency_report(std::istream& log)
{
    KbqaEvalResult result;
    double calls = 0.0;
    double seconds = 0.0;
    std::vector<std::vector<std::string>> answers;
    std::vector<std::vector<std::string>> gold;
    std::string line;
    while (std::getline(log, line))
    {
        if (trim(line).empty())
            continue;
        try
        {
            auto const j = nlohmann::json::parse(line);
            auto const c = j.at("llm_call_count").get<double>();
            auto const s = j.value("wall_seconds", 0.0);
            calls += c;
            seconds += s;
            ++result.n_questions;
            if (j.contains("gold_answers"))
            {
                answers.push_back(j.at("final_answers").get<std::vector<std::string>>());
                gold.push_back(j.at("gold_answers").get<std::vector<std::string>>());
            }
        }
        catch (const nlohmann::json::exception&)
        {
            ++result.skipped_records;
        }
    }
    if (result.skipped_records > 0)
        spdlog::warn("skipped {} unusable trajectory records", result.skipped_records);
    if (result.n_questions == 0)
        throw ArgumentError("trajectory log holds no usable records");
    result.avg_llm_calls = calls / static_cast<double>(result.n_questions);
    result.avg_seconds = seconds / static_cast<double>(result.n_questions);
    if (!answers.empty())
        result.hits_at_1 = kbqa_hits_at_1(answers, gold);
    return result;
}

KbqaEvalResult efficiency_report(const std::filesystem::path& log)
{
    std::ifstream in(log);
    if (!in)
        throw LoadError(fmt::format("cannot open trajectory log {}", log.string()));
    return efficiency_report(in);
}

void RunConfig::validate() const
{
    if (keep_fraction <= 0.0 || keep_fraction > 1.0)
        throw ArgumentError(fmt::format("keep_fraction must be in (0, 1], got {}", keep_fraction));
    if (completer != "native" && completer != "remote")
        throw ArgumentError(fmt::format("completer must be 'native' or 'remote', got '{}'", completer));
    if (completer == "remote" && completer_endpoint.empty())
        throw ArgumentError("completer_endpoint is required for the remote completer");
    if (training.dim == 0 || training.batch_size == 0 || training.epochs == 0)
        throw ArgumentError("dim, batch_size and epochs must be positive");
    if (!(training.learning_rate > 0.0))
        throw ArgumentError("learning_rate must be positive");
    if (num_samples == 0)
        throw ArgumentError("num_samples must be positive");
    if (agent.llm.temperature < 0.0)
        throw ArgumentError("llm temperature must be non-negative");
    agent.validate();
}

nlohmann::json RunConfig::to_json() const
{
    return {
        { "data_dir", data_dir.string() },
        { "run_dir", run_dir.string() },
        { "seed", seed },
        { "source_triples", source_triples.string() },
        { "source_entities", source_entities.string() },
        { "source_relations", source_relations.string() },
        { "n_valid", n_valid },
        { "n_test", n_test },
        { "keep_fraction", keep_fraction },
        { "completer", completer },
        { "completer_endpoint", completer_endpoint },
        { "num_samples", num_samples },
        { "completer_temperature", completer_temperature },
        { "max_context", max_context },
        { "dim", training.dim },
        { "epochs", training.epochs },
        { "batch_size", training.batch_size },
        { "learning_rate", training.learning_rate },
        { "optimizer", training.optimizer == OptimizerKind::adam ? "adam" : "sgd" },
        { "finetune_passes", training.finetune_passes },
        { "samples_per_triple", samples_per_triple },
        { "max_steps", agent.max_steps },
        { "max_llm_calls_per_step", agent.max_llm_calls_per_step },
        { "complete_top_k", agent.complete_top_k },
        { "relations_per_search", agent.relations_per_search },
        { "llm_temperature", agent.llm.temperature },
        { "llm_max_tokens", agent.llm.max_tokens },
        { "llm_endpoint", llm_endpoint },
        { "llm_model", llm_model },
        { "llm_concurrency", llm_concurrency },
        { "scripted", scripted.string() },
    };
}

} // namespace jointkb
