// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "jointkb/agent.hpp"
#include "jointkb/completer.hpp"
#include "jointkb/errors.hpp"
#include "jointkb/eval.hpp"
#include "jointkb/joint_trainer.hpp"
#include "jointkb/kb_store.hpp"
#include "jointkb/text.hpp"
#include "jointkb/text_retrieval.hpp"
#include "test_support.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>

using namespace jointkb;
using namespace jointkb::testing;

namespace
{

struct Outcome
{
    bool pass = false;
    bool skipped = false;
    std::string detail;
};

Outcome pass(std::string detail)
{
    return { true, false, std::move(detail) };
}

Outcome fail(std::string detail)
{
    return { false, false, std::move(detail) };
}

Triple tr(const std::string& h, const std::string& r, const std::string& t)
{
    return { EntityId(h), RelationId(r), EntityId(t) };
}

// ---------------------------------------------------------------------------
// 1. Co-occurrence

Outcome cooccurrence_oracle()
{
    Rng rng(1001);
    std::size_t pairs = 0;
    for (int round = 0; round < 200; ++round)
    {
        auto const n_entities = 2 + rng.below(499);
        auto const n_relations = 1 + rng.below(20);
        auto const n_triples = rng.below(3 * n_entities);
        auto kb = random_kb(rng, n_entities, n_relations, n_triples);
        if (round % 2 == 1)
            kb = kb.with_triples(degrade(kb.triples(), 0.5, round, kb));
        else
            (void)kb.add_noop_loops_for_isolated();

        // R_e from one pass over the triple set, then the double loop.
        std::map<EntityId, std::set<RelationId>> incident;
        for (auto const& t: kb.triples())
        {
            if (t.relation.value == noop_relation)
                continue;
            incident[t.head].insert(t.relation);
            incident[t.tail].insert(t.relation);
        }
        for (auto const& [r, rr]: kb.relations())
            for (auto const& [r_hat, rh]: kb.relations())
            {
                std::uint64_t expected = 0;
                if (r.value != noop_relation && r_hat.value != noop_relation)
                    for (auto const& [e, rels]: incident)
                        expected += rels.contains(r) && rels.contains(r_hat) ? 1 : 0;
                if (kb.cooccurrence_score(r, r_hat) != expected)
                    return fail(fmt::format("KB {} S({}, {}) = {}, oracle {}", round, r.value, r_hat.value,
                                            kb.cooccurrence_score(r, r_hat), expected));
                ++pairs;
            }
    }
    return pass(fmt::format("200 KBs, {} relation pairs exact", pairs));
}

// ---------------------------------------------------------------------------
// 2. BM25

Outcome bm25_oracle()
{
    Rng rng(2002);
    std::size_t checked = 0;
    std::size_t ties = 0;
    for (int round = 0; round < 300; ++round)
    {
        auto const vocab = 5 + rng.below(40);
        auto const n_docs = rng.below(101);
        std::vector<Document> docs;
        std::vector<std::vector<std::string>> tokens;
        for (std::size_t d = 0; d < n_docs; ++d)
        {
            std::string text;
            // Every fifth document repeats an earlier one to force exact ties.
            if (d > 0 && rng.below(5) == 0)
                text = docs[rng.below(d)].text;
            else
                for (std::size_t w = 0, len = 1 + rng.below(12); w < len; ++w)
                    text += fmt::format("w{} ", rng.below(vocab));
            // Ids are not in insertion order so that the tie-break is really by id.
            docs.push_back({ fmt::format("doc-{:03d}", (d * 37 + round) % 1000), text });
            tokens.push_back(tokenize(text));
        }
        std::string query;
        std::vector<std::string> query_tokens;
        for (std::size_t w = 0, len = 1 + rng.below(5); w < len; ++w)
            query += fmt::format("w{} ", rng.below(vocab + 5));
        query_tokens = tokenize(query);

        Bm25Index const index(docs);
        auto const expected = brute_bm25(tokens, query_tokens);
        std::vector<std::pair<double, std::string>> ranked;
        std::map<std::string, double> by_id;
        for (std::size_t d = 0; d < n_docs; ++d)
            if (expected[d] > 0.0)
            {
                ranked.emplace_back(expected[d], docs[d].doc_id);
                by_id[docs[d].doc_id] = expected[d];
            }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return std::abs(a.first - b.first) > 1e-9 ? a.first > b.first : a.second < b.second;
        });

        auto const k = n_docs == 0 ? 3 : 1 + rng.below(n_docs + 2);
        auto const hits = index.top_k(query, k);
        if (hits.size() != std::min<std::size_t>(k, ranked.size()))
            return fail(fmt::format("round {}: {} hits, expected {}", round, hits.size(),
                                    std::min<std::size_t>(k, ranked.size())));
        for (std::size_t i = 0; i < hits.size(); ++i)
        {
            if (hits[i].doc_id != ranked[i].second)
                return fail(fmt::format("round {} position {}: {} vs oracle {}", round, i, hits[i].doc_id,
                                        ranked[i].second));
            if (std::abs(hits[i].score - by_id.at(hits[i].doc_id)) > 1e-9)
                return fail(fmt::format("round {} {}: score {} vs oracle {}", round, hits[i].doc_id, hits[i].score,
                                        by_id.at(hits[i].doc_id)));
            if (i > 0 && hits[i].score == hits[i - 1].score)
                ++ties;
            ++checked;
        }
    }
    return pass(fmt::format("300 corpora, {} ranked documents within 1e-9, {} exact ties ordered by id", checked, ties));
}

// ---------------------------------------------------------------------------
// 3. BFS witness

Outcome bfs_oracle()
{
    Rng rng(3003);
    std::size_t queries = 0;
    for (int round = 0; round < 500; ++round)
    {
        auto const n = 1 + rng.below(50);
        auto const m = rng.below(2 * n + 1);
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        std::vector<ObservedTriple> triples;
        for (std::size_t i = 0; i < m; ++i)
        {
            auto const a = rng.below(n);
            auto const b = rng.below(n);
            edges.emplace_back(a, b);
            triples.push_back({ { fmt::format("n{}", a), fmt::format("r{}", rng.below(3)), fmt::format("n{}", b) },
                                std::nullopt, true });
        }
        auto const dist = all_pairs_hops(n, edges);
        ReasoningSubgraph const graph(triples);
        ReasoningSubgraph const again(triples);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t t = 0; t < n; ++t)
            {
                auto const src = fmt::format("n{}", s);
                auto const dst = fmt::format("n{}", t);
                // Nodes without any edge are not part of G_q.
                if (!graph.has_node(src) || !graph.has_node(dst))
                    continue;
                auto const w = bfs_witness(graph, src, dst);
                if (w != bfs_witness(again, src, dst))
                    return fail(fmt::format("graph {}: {} -> {} differs between runs", round, src, dst));
                auto const d = dist[s][t];
                if (d < 0)
                {
                    if (w)
                        return fail(fmt::format("graph {}: witness for unreachable {} -> {}", round, src, dst));
                    ++queries;
                    continue;
                }
                if (!w || static_cast<int>(w->size()) != d)
                    return fail(fmt::format("graph {}: {} -> {} length {} vs distance {}", round, src, dst,
                                            w ? static_cast<int>(w->size()) : -1, d));
                // The witness must walk from src to dst.
                auto node = src;
                for (auto idx: *w)
                {
                    auto const& e = graph.triples()[idx].text;
                    if (e.head == node)
                        node = e.tail;
                    else if (e.tail == node)
                        node = e.head;
                    else
                        return fail(fmt::format("graph {}: witness {} -> {} is not a walk", round, src, dst));
                }
                if (node != dst)
                    return fail(fmt::format("graph {}: witness {} -> {} ends at {}", round, src, dst, node));
                ++queries;
            }
    }
    return pass(fmt::format("500 graphs, {} pairs match all-pairs distances, repeat runs identical", queries));
}

// ---------------------------------------------------------------------------
// 4. Woodrow Wilson replay

Outcome wilson_replay()
{
    auto const kb = load_fixture_kb("wilson");
    auto const completer = wilson_completer();
    std::vector<std::string> const gold { "Davidson College", "University of Virginia School of Law",
                                          "Princeton University", "Johns Hopkins University" };
    auto run = [&] {
        ScriptedBackend llm(ScriptedBackend::read_script(fixture_dir("wilson") / "script.jsonl"));
        Agent agent(kb, completer, llm);
        auto traj = agent.run_episode("where did woodrow wilson go to school?", { EntityId("Q100") }, gold);
        if (llm.remaining() != 0)
            throw Error(fmt::format("{} script steps unused", llm.remaining()));
        return traj;
    };
    auto const first = run();
    auto const second = run();

    std::vector<std::string> actions;
    for (auto const& s: first.steps)
        actions.emplace_back(s.action ? to_string(s.action->kind) : "none");
    auto const joined = join(actions, ", ");
    if (joined != "search, complete, generate, finish")
        return fail("action sequence [" + joined + "]");
    std::vector<std::string> const expected { "Davidson College", "Princeton University", "Johns Hopkins University" };
    if (first.verified_answers != expected)
        return fail("verified [" + join(first.verified_answers, " | ") + "]");
    bool const uva_predicted =
        std::find(first.final_answers.begin(), first.final_answers.end(), "University of Virginia")
        != first.final_answers.end();
    if (!uva_predicted || first.final_answers.size() != 4)
        return fail("finish did not predict the four schools");
    auto const a = to_json(first).dump();
    auto const b = to_json(second).dump();
    if (a != b)
        return fail("serialized trajectories differ between runs");
    return pass(fmt::format("[{}], 3 of 4 verified, University of Virginia filtered, {} bytes identical", joined,
                            a.size()));
}

// ---------------------------------------------------------------------------
// 5. Call budget

/// Random but template-aware traffic: every reply is plausible for the prompt it answers.
std::string random_reply(const ChatRequest& req, Rng& rng, const KnowledgeBase& kb)
{
    auto pick_entity = [&]() -> std::string {
        if (rng.below(6) == 0)
            return "Somebody Unknown";
        auto it = kb.entities().begin();
        std::advance(it, static_cast<long>(rng.below(kb.entities().size())));
        return it->second.label;
    };
    auto pick_relation = [&]() -> std::string {
        if (rng.below(6) == 0)
            return "invented relation";
        auto it = kb.relations().begin();
        std::advance(it, static_cast<long>(rng.below(kb.relations().size())));
        return it->second.label;
    };
    switch (req.template_id)
    {
    case TemplateId::relation_select:
        return pick_relation() + ", " + pick_relation() + ", " + pick_relation();
    case TemplateId::entity_select:
    {
        auto const ids = kb.lookup_label(pick_entity());
        return ids.empty() || rng.below(4) == 0 ? "no idea" : "Answer: " + ids.front().value;
    }
    case TemplateId::triple_generate:
    case TemplateId::triple_modify:
    {
        std::string out = "Generated Triples: \"\"\"\n";
        for (std::size_t i = 0, n = rng.below(4); i < n; ++i)
            out += fmt::format("{}. {}, {}, {}\n", i + 1, pick_entity(), pick_relation(), pick_entity());
        return out + "\"\"\"";
    }
    case TemplateId::path_select:
    case TemplateId::cot:
        return "Answer: " + pick_entity();
    case TemplateId::agent_train:
    case TemplateId::agent_infer:
        break;
    }
    std::string action;
    switch (rng.below(7))
    {
    case 0:
        action = "Search[" + pick_entity() + " | " + pick_entity() + "]";
        break;
    case 1:
        action = "Search[" + pick_entity() + "]";
        break;
    case 2:
        action = "Generate[what else is known about " + pick_entity() + "?]";
        break;
    case 3:
        action = "Complete[" + pick_entity() + " | " + pick_relation() + "]";
        break;
    case 4:
        action = rng.below(3) == 0 ? "Finish[" + pick_entity() + "]" : "Search[" + pick_entity() + "]";
        break;
    case 5:
        return "I am thinking without acting.";
    default:
        action = "Ponder[" + pick_entity() + "]";
        break;
    }
    return "Let me continue.\nAction 1: " + action + "\nObservation 1: invented";
}

Outcome call_budget()
{
    Rng rng(5005);
    std::vector<KnowledgeBase> kbs;
    std::vector<NativeCompleter> completers;
    for (int i = 0; i < 8; ++i)
    {
        auto kb = random_kb(rng, 30 + rng.below(60), 2 + rng.below(8), 60 + rng.below(200));
        // Shared labels exercise entity disambiguation.
        kb.add_entity({ EntityId("dup-a"), "entity 1", "a namesake" });
        (void)kb.add_triple({ EntityId("dup-a"), RelationId("r0"), EntityId("e2") });
        (void)kb.add_noop_loops_for_isolated();
        TrainingConfig config;
        config.dim = 8;
        config.epochs = 2;
        config.seed = static_cast<std::uint64_t>(i);
        NativeCompleter model;
        (void)model.pretrain(kb.triples(), kb, config);
        kbs.push_back(std::move(kb));
        completers.push_back(std::move(model));
    }

    AgentConfig config;
    std::size_t max_calls = 0;
    std::size_t max_steps = 0;
    std::map<Termination, std::size_t> endings;
    for (int episode = 0; episode < 1000; ++episode)
    {
        auto const which = rng.below(kbs.size());
        auto const& kb = kbs[which];
        Rng replies(static_cast<std::uint64_t>(episode) * 7919 + 1);
        std::size_t served = 0;
        FunctionBackend llm([&](const ChatRequest& req) {
            ++served;
            return random_reply(req, replies, kb);
        });
        Agent agent(kb, completers[which], llm, config);
        std::vector<EntityId> topics;
        if (rng.below(10) != 0)
            topics.emplace_back("e" + std::to_string(rng.below(30)));
        std::optional<std::vector<std::string>> gold;
        if (rng.below(2) == 0)
            gold = std::vector<std::string> { "entity " + std::to_string(rng.below(30)) };
        auto const traj = agent.run_episode(fmt::format("question {}", episode), topics, gold);
        if (traj.llm_call_count > config.call_budget())
            return fail(fmt::format("episode {} used {} calls", episode, traj.llm_call_count));
        if (traj.steps.size() > config.max_steps)
            return fail(fmt::format("episode {} ran {} steps", episode, traj.steps.size()));
        if (traj.llm_call_count != served)
            return fail(fmt::format("episode {} counted {} calls but served {}", episode, traj.llm_call_count, served));
        max_calls = std::max(max_calls, traj.llm_call_count);
        max_steps = std::max(max_steps, traj.steps.size());
        ++endings[traj.termination];
    }
    std::vector<std::string> parts;
    for (auto const& [t, n]: endings)
        parts.push_back(fmt::format("{} {}", to_string(t), n));
    return pass(fmt::format("1000 episodes, max {} calls / {} steps; endings: {}", max_calls, max_steps,
                            join(parts, ", ")));
}

// ---------------------------------------------------------------------------
// 6. Remote filter contract

Outcome remote_filter()
{
    Rng rng(6006);
    auto kb = random_kb(rng, 200, 5, 600);
    std::vector<std::string> labels;
    for (auto const& [id, record]: kb.entities())
        labels.push_back(record.label);

    std::map<std::string, double> decoded;
    std::size_t out_of_catalog = 0;
    std::size_t total_samples = 0;
    JsonStubServer server;
    server.route("/generate", [&](const nlohmann::json& body) {
        decoded.clear();
        auto samples = nlohmann::json::array();
        auto const n = body.at("num_samples").get<std::size_t>();
        // A query-specific pool of plausible decodes, so most entities are never decoded.
        std::vector<std::string> pool;
        for (int i = 0; i < 12; ++i)
            pool.push_back(labels[rng.below(labels.size())]);
        for (std::size_t i = 0; i < n; ++i)
        {
            double const logprob = -rng.uniform(0.01, 12.0);
            std::string text;
            if (rng.unit() < 0.3)
            {
                text = rng.below(2) == 0 ? fmt::format("entity {}", 1000 + rng.below(1000))
                                         : fmt::format("garbled decode {}", rng.below(50));
                ++out_of_catalog;
            }
            else
            {
                text = pool[rng.below(pool.size())];
                auto [it, inserted] = decoded.emplace(text, logprob);
                if (!inserted)
                    it->second = std::max(it->second, logprob);
            }
            ++total_samples;
            samples.push_back({ { "text", text }, { "logprob", logprob } });
        }
        return std::pair { 200, nlohmann::json { { "samples", samples } } };
    });
    server.start();
    RemoteCompleter remote({ server.endpoint(), 40, 1.0, 20 });

    std::size_t returned = 0;
    for (int q = 0; q < 100; ++q)
    {
        auto const h = EntityId("e" + std::to_string(rng.below(200)));
        auto const r = RelationId("r" + std::to_string(rng.below(5)));
        auto const k = 1 + rng.below(30);
        auto const top = remote.predict(CompletionQuery::for_tail(h, r), kb, k);
        if (top.size() != std::min<std::size_t>(k, decoded.size()))
            return fail(fmt::format("query {}: {} results for k={} with {} decoded entities", q, top.size(), k,
                                    decoded.size()));
        for (std::size_t i = 0; i < top.size(); ++i)
        {
            auto const& p = top[i];
            if (!kb.has_entity(p.entity))
                return fail(fmt::format("query {}: out-of-catalog {}", q, p.entity.value));
            auto it = decoded.find(kb.label(p.entity));
            if (it == decoded.end())
                return fail(fmt::format("query {}: undecoded {} in top-k", q, p.entity.value));
            if (!std::isfinite(p.score) || p.score != it->second)
                return fail(fmt::format("query {}: score {} vs best decode {}", q, p.score, it->second));
            if (i > 0 && top[i - 1].score < p.score)
                return fail(fmt::format("query {}: ranking not descending", q));
        }
        returned += top.size();
    }
    return pass(fmt::format("100 queries, {}/{} samples out of catalog, {} predictions all decoded catalog entities",
                            out_of_catalog, total_samples, returned));
}

// ---------------------------------------------------------------------------
// 7. Incremental learning

Outcome incremental_learning()
{
    // Clustered synthetic KB: each relation maps an entity's cluster to a fixed target
    // cluster, so unseen triples are predictable from the structure.
    Rng rng(42);
    KnowledgeBase kb;
    constexpr int n_entities = 400;
    constexpr int n_clusters = 20;
    constexpr int n_relations = 10;
    for (int i = 0; i < n_entities; ++i)
        kb.add_entity({ EntityId(fmt::format("e{}", i)), fmt::format("ent {}", i), "" });
    for (int r = 0; r < n_relations; ++r)
        kb.add_relation({ RelationId(fmt::format("r{}", r)), fmt::format("rel {}", r), "", "" });
    std::vector<std::vector<int>> target(n_relations, std::vector<int>(n_clusters));
    for (auto& row: target)
    {
        for (int c = 0; c < n_clusters; ++c)
            row[static_cast<std::size_t>(c)] = c;
        rng.shuffle(std::span<int>(row));
    }
    TripleSet all;
    while (all.size() < 2050)
    {
        auto const h = static_cast<int>(rng.below(n_entities));
        auto const r = static_cast<int>(rng.below(n_relations));
        auto const tc = target[static_cast<std::size_t>(r)][static_cast<std::size_t>(h % n_clusters)];
        auto const t = tc + n_clusters * static_cast<int>(rng.below(n_entities / n_clusters));
        all.insert(tr(fmt::format("e{}", h), fmt::format("r{}", r), fmt::format("e{}", t)));
    }
    std::vector<Triple> shuffled(all.begin(), all.end());
    rng.shuffle(std::span<Triple>(shuffled));
    std::vector<Triple> const fresh(shuffled.begin(), shuffled.begin() + 50);
    TripleSet const train(shuffled.begin() + 50, shuffled.end());
    auto const kb_train = kb.with_triples(train);

    TrainingConfig config;
    NativeCompleter model;
    auto const report = model.pretrain(train, kb_train, config);

    std::vector<Triple> train_list(train.begin(), train.end());
    rng.shuffle(std::span<Triple>(train_list));
    TripleSet const probe(train_list.begin(), train_list.begin() + 200);
    TripleSet const fresh_set(fresh.begin(), fresh.end());

    auto const new_before = evaluate_kbc(model, kb_train, fresh_set);
    auto const probe_before = evaluate_kbc(model, kb_train, probe);
    ReplayMemory memory(train, 7);
    for (auto const& t: fresh)
        (void)model.incremental_finetune(std::span<const Triple>(&t, 1), memory, 10, kb_train, config);
    auto const new_after = evaluate_kbc(model, kb_train, fresh_set);
    auto const probe_after = evaluate_kbc(model, kb_train, probe);

    double const rank_gain = 1.0 - new_after.mean_rank / new_before.mean_rank;
    double const mrr_loss = 1.0 - probe_after.mrr / probe_before.mrr;
    auto const detail = fmt::format("|train| {}, pretrain loss {:.3f} -> {:.3f}; new-triple mean rank {:.1f} -> {:.1f} "
                                    "({:+.1f}%), probe MRR {:.4f} -> {:.4f} ({:.1f}% loss)",
                                    train.size(), report.epoch_losses.front(), report.epoch_losses.back(),
                                    new_before.mean_rank, new_after.mean_rank, -100.0 * rank_gain, probe_before.mrr,
                                    probe_after.mrr, 100.0 * mrr_loss);
    if (rank_gain < 0.30 || mrr_loss > 0.10)
        return fail(detail);
    return pass(detail);
}

// ---------------------------------------------------------------------------
// 8. Joint loop end to end

Outcome joint_loop()
{
    Rng rng(8008);
    KnowledgeBase full;
    for (int i = 0; i < 120; ++i)
        full.add_entity({ EntityId(fmt::format("e{}", i)), fmt::format("entity {}", i), "" });
    for (int r = 0; r < 6; ++r)
        full.add_relation({ RelationId(fmt::format("r{}", r)), fmt::format("relation {}", r), "", "" });
    while (full.triples().size() < 300)
        (void)full.add_triple(tr(fmt::format("e{}", rng.below(120)), fmt::format("r{}", rng.below(6)),
                                 fmt::format("e{}", rng.below(120))));
    auto const kept = degrade(full.triples(), 0.5, 9, full);
    auto kb = full.with_triples(kept);

    std::vector<Triple> removed;
    for (auto const& t: full.triples())
        if (!kept.contains(t) && t.head != t.tail)
            removed.push_back(t);
    rng.shuffle(std::span<Triple>(removed));

    // Ten questions, each about a deleted fact; the last two finish wrongly.
    std::vector<QaExample> questions;
    std::vector<ScriptStep> script;
    std::vector<Triple> injected;
    std::set<std::pair<EntityId, RelationId>> used;
    for (auto const& t: removed)
    {
        if (questions.size() == 10)
            break;
        if (!used.insert({ t.head, t.relation }).second)
            continue;
        auto const h = full.label(t.head);
        auto const r = full.label(t.relation);
        auto const a = full.label(t.tail);
        bool const correct = questions.size() < 8;
        auto const fact = fmt::format("{}, {}, {}", h, r, a);
        questions.push_back({ fmt::format("what is the {} of {}?", r, h), { t.head }, { a } });
        script.push_back({ TemplateId::agent_train, "Question: " + questions.back().question,
                           fmt::format("I should ask the completer.\nAction 1: Complete[{} | {}]", h, r) });
        script.push_back({ TemplateId::agent_train, "Thought 2:",
                           fmt::format("The store may miss it.\nAction 2: Generate[what is the {} of {}?]", r, h) });
        script.push_back({ TemplateId::triple_generate, "Hint: " + a, "Generated Triples: \"\"\"\n1. " + fact + "\n\"\"\"" });
        script.push_back({ TemplateId::triple_modify, "", "New Triples: \"\"\"\n1. " + fact + "\n\"\"\"" });
        script.push_back({ TemplateId::agent_train, "Thought 3:",
                           correct ? fmt::format("Found it.\nAction 3: Finish[{}]", a)
                                   : std::string("Not sure.\nAction 3: Finish[unknown]") });
        if (correct)
        {
            script.push_back({ TemplateId::path_select, "Answer: " + a,
                               "Related relations: " + r + "\nRelated triples: \"\"\"\n" + fact + "\n\"\"\"" });
            injected.push_back(t);
        }
    }
    if (questions.size() < 10)
        return fail("could not build ten questions");

    TrainingConfig training;
    training.dim = 32;
    training.epochs = 60;
    training.seed = 8;
    NativeCompleter completer;
    (void)completer.pretrain(kb.triples(), kb, training);
    auto const before = completer;
    ReplayMemory memory(kb.triples(), 8);
    ScriptedBackend llm(script);

    JointConfig config;
    config.training = training;
    config.run_dir = scratch_dir("acceptance-joint");
    auto const report = train_joint(kb, questions, completer, memory, llm, config);
    if (llm.remaining() != 0)
        return fail(fmt::format("{} script steps unused", llm.remaining()));
    if (report.completed != 10)
        return fail(fmt::format("{} of 10 questions completed", report.completed));

    for (std::size_t i = 0; i < 8; ++i)
    {
        auto const& path = report.paths[i];
        if (path.triples.empty())
            return fail(fmt::format("question {} has an empty path", i + 1));
        for (std::size_t j = 0; j < path.triples.size(); ++j)
            if (!kb.has_relation(path.triples[j].relation) || path.triples[j].relation.value == noop_relation)
                return fail(fmt::format("question {}: unlinked relation in path", i + 1));
    }

    auto const after = NativeCompleter::load(*config.run_dir / "completer.json");
    auto rank = [&](const NativeCompleter& m, const Triple& t) {
        auto const all = m.predict(CompletionQuery::for_tail(t.head, t.relation), kb, kb.entities().size());
        auto it = std::find_if(all.begin(), all.end(), [&](const RankedPrediction& p) { return p.entity == t.tail; });
        return static_cast<std::size_t>(it - all.begin()) + 1;
    };
    std::size_t improved = 0;
    std::vector<std::string> moves;
    for (auto const& t: injected)
    {
        auto const b = rank(before, t);
        auto const a = rank(after, t);
        improved += a < b ? 1 : 0;
        moves.push_back(fmt::format("{}->{}", b, a));
    }
    auto const detail = fmt::format("10 questions, {} fine-tune calls, {} path triples; injected tail ranks {}; "
                                    "{}/{} improved",
                                    report.finetune_calls, report.path_triples, join(moves, " "), improved,
                                    injected.size());
    return improved >= 1 ? pass(detail) : fail(detail);
}

// ---------------------------------------------------------------------------
// 9. Metrics

Outcome metric_oracles()
{
    Rng rng(9009);
    for (int instance = 0; instance < 100; ++instance)
    {
        auto const n_entities = 5 + rng.below(40);
        auto const queries = 1 + rng.below(50);
        std::vector<std::vector<EntityId>> rankings;
        std::vector<EntityId> gold;
        std::vector<std::vector<std::string>> answers;
        std::vector<std::vector<std::string>> gold_answers;
        for (std::size_t q = 0; q < queries; ++q)
        {
            std::vector<std::size_t> order(n_entities);
            for (std::size_t i = 0; i < n_entities; ++i)
                order[i] = i;
            rng.shuffle(std::span<std::size_t>(order));
            order.resize(rng.below(n_entities + 1));
            std::vector<EntityId> ranking;
            for (auto i: order)
                ranking.emplace_back(fmt::format("e{}", i));
            rankings.push_back(std::move(ranking));
            gold.emplace_back(fmt::format("e{}", rng.below(n_entities)));

            std::vector<std::string> a;
            for (std::size_t i = 0, n = rng.below(3); i < n; ++i)
                a.push_back(rng.below(2) == 0 ? fmt::format("Answer {}", rng.below(6)) : fmt::format("answer  {}", rng.below(6)));
            if (a.empty() || rng.below(5) == 0)
                a = { "unknown" };
            answers.push_back(a);
            gold_answers.push_back({ fmt::format("answer {}", rng.below(6)) });
        }
        auto const m = mrr(rankings, gold);
        auto const h1 = hits_at_k(rankings, gold, 1);
        auto const h3 = hits_at_k(rankings, gold, 3);
        auto const h10 = hits_at_k(rankings, gold, 10);
        auto const q1 = kbqa_hits_at_1(answers, gold_answers);
        if (std::abs(m - brute_mrr(rankings, gold)) > 1e-12)
            return fail(fmt::format("instance {}: MRR {} vs {}", instance, m, brute_mrr(rankings, gold)));
        for (auto [k, v]: { std::pair { 1UL, h1 }, std::pair { 3UL, h3 }, std::pair { 10UL, h10 } })
            if (std::abs(v - brute_hits(rankings, gold, k)) > 1e-12)
                return fail(fmt::format("instance {}: hits@{} {} vs {}", instance, k, v, brute_hits(rankings, gold, k)));
        if (std::abs(q1 - brute_kbqa_hits(answers, gold_answers)) > 1e-12)
            return fail(fmt::format("instance {}: KBQA hits@1 {} vs {}", instance, q1,
                                    brute_kbqa_hits(answers, gold_answers)));
        if (!(h1 <= h3 && h3 <= h10))
            return fail(fmt::format("instance {}: hits not monotone", instance));
    }
    return pass("100 instances: MRR, Hits@1/3/10 and KBQA Hits@1 within 1e-12; monotone");
}

// ---------------------------------------------------------------------------
// 10. Live smoke

Outcome live_smoke()
{
    auto live = LiveBackendConfig::from_env();
    if (live.api_key.empty())
        return { false, true, "no JOINTKB_LLM_API_KEY or OPENAI_API_KEY in the environment" };
    auto const kb = load_fixture_kb("wilson");
    NativeCompleter completer;
    TrainingConfig training;
    training.dim = 16;
    training.epochs = 20;
    (void)completer.pretrain(kb.triples(), kb, training);
    LiveBackend llm(live);
    Agent agent(kb, completer, llm);
    auto const traj = agent.run_episode("where did woodrow wilson go to school?", { EntityId("Q100") });
    auto const text = to_json(traj, true).dump();
    auto const parsed = nlohmann::json::parse(text);
    if (traj.termination == Termination::error)
        return fail("transport error: " + traj.error);
    if (traj.llm_call_count > agent.config().call_budget() || !parsed.contains("steps"))
        return fail(fmt::format("{} calls, well-formed: {}", traj.llm_call_count, parsed.contains("steps")));
    return pass(fmt::format("{} via {}: {} steps, {} calls, answers [{}]", live.model, live.endpoint, traj.steps.size(),
                            traj.llm_call_count, join(traj.final_answers, " | ")));
}

struct Criterion
{
    int number;
    std::string name;
    double limit_seconds;
    std::function<Outcome()> run;
};

} // namespace

int main()
{
    std::vector<Criterion> const criteria {
        { 1, "co-occurrence oracle", 30, cooccurrence_oracle },
        { 2, "BM25 oracle", 10, bm25_oracle },
        { 3, "BFS oracle", 10, bfs_oracle },
        { 4, "golden trajectory replay", 5, wilson_replay },
        { 5, "call-budget invariant", 60, call_budget },
        { 6, "completer filter contract", 5, remote_filter },
        { 7, "incremental learning contract", 300, incremental_learning },
        { 8, "joint loop end to end", 120, joint_loop },
        { 9, "metric oracles", 5, metric_oracles },
        { 10, "live smoke", 600, live_smoke },
    };

    bool all_ok = true;
    for (auto const& c: criteria)
    {
        auto const start = std::chrono::steady_clock::now();
        Outcome outcome;
        try
        {
            outcome = c.run();
        }
        catch (const std::exception& e)
        {
            outcome = fail(std::string("exception: ") + e.what());
        }
        double const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (outcome.pass && seconds > c.limit_seconds)
            outcome = fail(fmt::format("{} (over the {:.0f} s limit)", outcome.detail, c.limit_seconds));
        auto const verdict = outcome.skipped ? "SKIP" : outcome.pass ? "PASS" : "FAIL";
        all_ok = all_ok && (outcome.pass || outcome.skipped);
        fmt::print("{} {:>2} {}: {} [{:.2f} s]\n", verdict, c.number, c.name, outcome.detail, seconds);
        std::fflush(stdout);
    }
    return all_ok ? EXIT_SUCCESS : EXIT_FAILURE;
}
