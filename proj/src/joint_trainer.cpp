// SPDX-License-Identifier: Apache-2.0
#include "jointkb/joint_trainer.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>

namespace jointkb
{

std::vector<QaExample> load_qa(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError(fmt::format("cannot open QA file {}", path.string()));
    std::vector<QaExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (trim(line).empty())
            continue;
        try
        {
            auto const j = nlohmann::json::parse(line);
            QaExample qa;
            qa.question = j.at("question").get<std::string>();
            for (auto const& e: j.value("topic_entities", nlohmann::json::array()))
                qa.topic_entities.emplace_back(e.get<std::string>());
            qa.gold_answers = j.value("answers", std::vector<std::string> {});
            if (qa.question.empty())
                throw LoadError(fmt::format("{}:{}: empty question", path.string(), lineno));
            out.push_back(std::move(qa));
        }
        catch (const nlohmann::json::exception& e)
        {
            throw LoadError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subgraph and BFS

ReasoningSubgraph::ReasoningSubgraph(std::vector<ObservedTriple> triples): _triples(std::move(triples))
{
    for (std::size_t i = 0; i < _triples.size(); ++i)
    {
        auto const h = normalize_surface(_triples[i].text.head);
        auto const t = normalize_surface(_triples[i].text.tail);
        _adjacency[h].push_back(Edge { t, i });
        if (h != t)
            _adjacency[t].push_back(Edge { h, i });
    }
    for (auto& [node, edges]: _adjacency)
    {
        std::sort(edges.begin(), edges.end(), [this](const Edge& a, const Edge& b) {
            if (a.neighbor != b.neighbor)
                return a.neighbor < b.neighbor;
            auto const ra = normalize_surface(_triples[a.triple].text.relation);
            auto const rb = normalize_surface(_triples[b.triple].text.relation);
            if (ra != rb)
                return ra < rb;
            return a.triple < b.triple;
        });
    }
}

bool ReasoningSubgraph::has_node(std::string_view label) const
{
    return _adjacency.contains(normalize_surface(label));
}

std::vector<std::size_t> ReasoningSubgraph::incident(std::string_view label) const
{
    std::vector<std::size_t> out;
    auto it = _adjacency.find(normalize_surface(label));
    if (it == _adjacency.end())
        return out;
    for (auto const& e: it->second)
        out.push_back(e.triple);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

const std::vector<ReasoningSubgraph::Edge>& ReasoningSubgraph::edges(const std::string& node) const
{
    static const std::vector<Edge> none;
    auto it = _adjacency.find(node);
    return it == _adjacency.end() ? none : it->second;
}

std::optional<std::vector<std::size_t>> bfs_witness(const ReasoningSubgraph& graph, std::string_view source,
                                                    std::string_view target)
{
    auto const s = normalize_surface(source);
    auto const t = normalize_surface(target);
    if (s == t)
        return graph.has_node(s) ? std::optional<std::vector<std::size_t>>(std::vector<std::size_t> {}) : std::nullopt;
    if (!graph.has_node(s) || !graph.has_node(t))
        return std::nullopt;

    struct Parent
    {
        std::string node;
        std::size_t triple;
    };
    std::map<std::string, Parent> parent;
    std::set<std::string> visited { s };
    std::deque<std::string> queue { s };
    while (!queue.empty() && !visited.contains(t))
    {
        auto const node = queue.front();
        queue.pop_front();
        for (auto const& e: graph.edges(node))
        {
            if (!visited.insert(e.neighbor).second)
                continue;
            parent.emplace(e.neighbor, Parent { node, e.triple });
            queue.push_back(e.neighbor);
        }
    }
    if (!visited.contains(t))
        return std::nullopt;

    std::vector<std::size_t> path;
    for (auto node = t; node != s;)
    {
        auto const& p = parent.at(node);
        path.push_back(p.triple);
        node = p.node;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

// ---------------------------------------------------------------------------
// Path parsing

namespace
{

std::string triple_key(const SurfaceTriple& t)
{
    return normalize_surface(t.head) + '\t' + normalize_surface(t.relation) + '\t' + normalize_surface(t.tail);
}

bool mentions(const ObservedTriple& t, const std::set<std::string>& labels)
{
    return labels.contains(normalize_surface(t.text.head)) || labels.contains(normalize_surface(t.text.tail));
}

EntityId entity_for_label(KnowledgeBase& kb, const std::string& label, ReasoningPath& path)
{
    auto const hits = kb.lookup_label(label);
    if (!hits.empty())
        return hits.front();
    EntityId id("gen:" + std::string(trim(label)));
    if (!kb.has_entity(id))
    {
        kb.add_entity(EntityRecord { id, std::string(trim(label)), "" });
        path.new_entities.push_back(id);
    }
    return id;
}

} // namespace

std::vector<ObservedTriple> surviving_triples(const Trajectory& trajectory)
{
    std::set<std::string> verified;
    for (auto const& a: trajectory.verified_answers)
        verified.insert(normalize_surface(a));
    std::set<std::string> filtered;
    for (auto const& a: trajectory.final_answers)
    {
        auto const n = normalize_surface(a);
        if (n != "unknown" && !verified.contains(n))
            filtered.insert(n);
    }

    std::vector<ObservedTriple> out;
    std::set<std::string> seen;
    for (auto const& step: trajectory.steps)
    {
        if (!step.action || step.action->kind == ActionKind::finish)
            continue;
        auto const& triples = step.observation.triples;
        // An observation goes only if every triple in it backs a rejected answer alone.
        bool const all_tainted = !triples.empty() && std::all_of(triples.begin(), triples.end(), [&](const auto& t) {
            return mentions(t, filtered) && !mentions(t, verified);
        });
        if (all_tainted)
            continue;
        for (auto const& t: triples)
            if (seen.insert(triple_key(t.text)).second)
                out.push_back(t);
    }
    return out;
}

ReasoningPath parse_reasoning_paths(const Trajectory& trajectory, KnowledgeBase& kb, LlmBackend& llm,
                                    const LlmParams& params)
{
    ReasoningPath path;
    path.source_question = trajectory.question;
    if (trajectory.mode != AgentMode::train || trajectory.verified_answers.empty())
    {
        path.notes.push_back("no verified answers");
        return path;
    }

    ReasoningSubgraph const graph(surviving_triples(trajectory));
    std::vector<std::string> topics;
    for (auto const& e: trajectory.topic_entities)
        topics.push_back(kb.has_entity(e) ? kb.label(e) : e.value);

    std::vector<std::size_t> witness;
    std::set<std::size_t> in_witness;
    std::set<std::string> on_path;
    bool reached = false;
    for (auto const& topic: topics)
    {
        for (auto const& answer: trajectory.verified_answers)
        {
            auto const w = bfs_witness(graph, topic, answer);
            if (!w)
                continue;
            reached = true;
            on_path.insert(normalize_surface(topic));
            for (auto idx: *w)
            {
                on_path.insert(normalize_surface(graph.triples()[idx].text.head));
                on_path.insert(normalize_surface(graph.triples()[idx].text.tail));
                if (in_witness.insert(idx).second)
                    witness.push_back(idx);
            }
        }
    }
    if (!reached || witness.empty())
    {
        path.notes.push_back("no path from topic entities to verified answers");
        return path;
    }

    std::vector<std::size_t> candidates = witness;
    std::set<std::size_t> in_candidates(witness.begin(), witness.end());
    for (std::size_t i = 0; i < graph.triples().size(); ++i)
    {
        auto const& t = graph.triples()[i].text;
        if ((on_path.contains(normalize_surface(t.head)) || on_path.contains(normalize_surface(t.tail)))
            && in_candidates.insert(i).second)
            candidates.push_back(i);
    }

    std::string known;
    for (auto idx: candidates)
        known += graph.triples()[idx].text.render() + "\n";
    // The reply may name any triple of G_q, not only the candidates shown.
    std::map<std::string, std::size_t> by_key;
    for (std::size_t i = 0; i < graph.triples().size(); ++i)
        by_key.emplace(triple_key(graph.triples()[i].text), i);
    auto const reply = llm.chat(make_request(TemplateId::path_select,
                                             { { "question", trajectory.question },
                                               { "answers", join(trajectory.verified_answers, " | ") },
                                               { "topic_entities", join(topics, ", ") },
                                               { "known_triples", known } },
                                             params));

    std::vector<std::size_t> selected;
    std::set<std::size_t> in_selected;
    for (auto const& t: parse_triple_lines(reply, kb))
        if (auto it = by_key.find(triple_key(t)); it != by_key.end() && in_selected.insert(it->second).second)
            selected.push_back(it->second);
    if (selected.empty())
    {
        path.notes.push_back("path selection matched no candidate; using the BFS witness");
        selected = witness;
    }

    std::set<Triple> emitted;
    for (auto idx: selected)
    {
        auto const& observed = graph.triples()[idx];
        if (!observed.relation_linked)
        {
            path.notes.push_back(fmt::format("dropped unlinked triple: {}", observed.text.render()));
            continue;
        }
        RelationId relation;
        if (observed.ids)
            relation = observed.ids->relation;
        else if (auto const hits = kb.lookup_relation_label(observed.text.relation); !hits.empty())
            relation = hits.front();
        else
        {
            path.notes.push_back(fmt::format("dropped triple with unknown relation: {}", observed.text.render()));
            continue;
        }
        if (relation.value == noop_relation)
            continue;
        auto const head = observed.ids ? observed.ids->head : entity_for_label(kb, observed.text.head, path);
        auto const tail = observed.ids ? observed.ids->tail : entity_for_label(kb, observed.text.tail, path);
        Triple const t { head, relation, tail };
        if (emitted.insert(t).second)
        {
            path.triples.push_back(t);
            path.surface.push_back(observed.text);
        }
    }
    if (!path.new_entities.empty())
        kb.add_noop_loops_for_isolated();
    return path;
}

// ---------------------------------------------------------------------------
// Joint training loop

namespace
{

struct RunFiles
{
    std::filesystem::path trajectories;
    std::filesystem::path paths;
    std::filesystem::path progress;
    std::filesystem::path checkpoint;
};

RunFiles run_files(const std::filesystem::path& dir)
{
    return RunFiles { dir / "trajectories.jsonl", dir / "paths.jsonl", dir / "progress.json", dir / "completer.json" };
}

void append_line(const std::filesystem::path& file, const nlohmann::json& record)
{
    std::ofstream out(file, std::ios::app);
    if (!out)
        throw Error(fmt::format("cannot append to {}", file.string()));
    out << record.dump() << '\n';
}

nlohmann::json path_record(std::size_t index, const ReasoningPath& path)
{
    auto triples = nlohmann::json::array();
    for (auto const& t: path.triples)
        triples.push_back({ t.head.value, t.relation.value, t.tail.value });
    auto surface = nlohmann::json::array();
    for (auto const& t: path.surface)
        surface.push_back({ t.head, t.relation, t.tail });
    auto added = nlohmann::json::array();
    for (auto const& e: path.new_entities)
        added.push_back(e.value);
    return { { "index", index },         { "question", path.source_question }, { "triples", triples },
             { "surface", surface },     { "new_entities", added },            { "notes", path.notes } };
}

} // namespace

JointReport train_joint(KnowledgeBase& kb, const std::vector<QaExample>& questions, CompleterModel& completer,
                        ReplayMemory& memory, LlmBackend& llm, const JointConfig& config)
{
    JointReport report;
    report.questions = questions.size();
    Agent agent(kb, completer, llm, config.agent);
    auto* native = dynamic_cast<NativeCompleter*>(&completer);

    std::optional<RunFiles> files;
    nlohmann::json progress { { "completed", 0 }, { "generated_entities", nlohmann::json::array() } };
    std::size_t start = 0;
    if (config.run_dir)
    {
        std::filesystem::create_directories(*config.run_dir);
        files = run_files(*config.run_dir);
        if (config.resume && std::filesystem::exists(files->progress))
        {
            std::ifstream in(files->progress);
            progress = nlohmann::json::parse(in);
            start = progress.at("completed").get<std::size_t>();
            for (auto const& e: progress.at("generated_entities"))
            {
                EntityId id(e.at(0).get<std::string>());
                if (!kb.has_entity(id))
                    kb.add_entity(EntityRecord { id, e.at(1).get<std::string>(), "" });
            }
            kb.add_noop_loops_for_isolated();
            if (native && std::filesystem::exists(files->checkpoint))
                *native = NativeCompleter::load(files->checkpoint);
            report.resumed = start;
            spdlog::info("resuming joint training at question {}", start + 1);
        }
        else
        {
            std::ofstream(files->trajectories, std::ios::trunc);
            std::ofstream(files->paths, std::ios::trunc);
        }
    }

    for (std::size_t i = start; i < questions.size(); ++i)
    {
        auto const& qa = questions[i];
        try
        {
            auto const trajectory = agent.run_episode(qa.question, qa.topic_entities, qa.gold_answers);
            ReasoningPath path;
            path.source_question = qa.question;
            if (!qa.topic_entities.empty() && trajectory.termination != Termination::error)
                path = parse_reasoning_paths(trajectory, kb, llm, config.agent.llm);
            else
                path.notes.push_back("no agent trajectory to parse");

            if (!path.triples.empty())
            {
                completer.incremental_finetune(path.triples, memory, config.samples_per_triple, kb, config.training);
                ++report.finetune_calls;
                report.path_triples += path.triples.size();
            }
            if (files)
            {
                auto record = to_json(trajectory, true);
                record["index"] = i;
                append_line(files->trajectories, record);
                append_line(files->paths, path_record(i, path));
            }
            for (auto const& e: path.new_entities)
                progress["generated_entities"].push_back({ e.value, kb.label(e) });
            if (trajectory.termination == Termination::error)
            {
                spdlog::warn("question {} ended with a transport error: {}", i + 1, trajectory.error);
                ++report.skipped;
            }
            else
                ++report.completed;
            report.paths.push_back(std::move(path));
        }
        catch (const Error& e)
        {
            spdlog::warn("question {} skipped: {}", i + 1, e.what());
            ++report.skipped;
            if (files)
                append_line(files->trajectories, { { "index", i }, { "question", qa.question }, { "error", e.what() } });
        }

        if (files)
        {
            if (native && native->trained())
                native->save(files->checkpoint);
            progress["completed"] = i + 1;
            auto const tmp = files->progress.string() + ".tmp";
            std::ofstream(tmp) << progress.dump(2) << '\n';
            std::filesystem::rename(tmp, files->progress);
        }
    }
    return report;
}

} // namespace jointkb
