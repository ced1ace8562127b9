// SPDX-License-Identifier: Apache-2.0
#include "jointkb/agent.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <regex>
#include <set>

namespace jointkb
{

namespace
{

constexpr std::array action_keywords {
    std::pair { ActionKind::search, std::string_view("search") },
    std::pair { ActionKind::generate, std::string_view("generate") },
    std::pair { ActionKind::complete, std::string_view("complete") },
    std::pair { ActionKind::finish, std::string_view("finish") },
};

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c: out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::string title_case(std::string_view s)
{
    std::string out(s);
    if (!out.empty() && out[0] >= 'a' && out[0] <= 'z')
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Strips list markers such as "1.", "2)", "-" and "*".
std::string_view strip_list_marker(std::string_view line)
{
    line = trim(line);
    std::size_t i = 0;
    while (i < line.size() && line[i] >= '0' && line[i] <= '9')
        ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')'))
        return trim(line.substr(i + 1));
    if (!line.empty() && (line[0] == '-' || line[0] == '*'))
        return trim(line.substr(1));
    return line;
}

} // namespace

std::string_view to_string(ActionKind kind)
{
    for (auto const& [k, name]: action_keywords)
        if (k == kind)
            return name;
    return "?";
}

std::string_view to_string(AgentMode mode)
{
    return mode == AgentMode::train ? "train" : "infer";
}

std::string_view to_string(Termination termination)
{
    switch (termination)
    {
        case Termination::finish: return "finish";
        case Termination::max_steps: return "max_steps";
        case Termination::budget: return "budget";
        case Termination::fallback: return "fallback";
        case Termination::error: return "error";
    }
    return "?";
}

std::string AgentAction::render() const
{
    return fmt::format("{}[{}]", title_case(to_string(kind)), join(arguments, " | "));
}

AgentAction parse_action(std::string_view text)
{
    text = trim(text);
    auto const open = text.find('[');
    auto const close = text.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
        throw ParseError(fmt::format("action '{}' is not of the form Keyword[...]", text));
    auto const tail = trim(text.substr(close + 1));
    if (!tail.empty() && tail != ".")
        throw ParseError(fmt::format("unexpected text after action: '{}'", tail));

    auto const keyword = lower(trim(text.substr(0, open)));
    std::optional<ActionKind> kind;
    for (auto const& [k, name]: action_keywords)
        if (keyword == name)
            kind = k;
    if (!kind)
        throw ParseError(fmt::format("unknown action '{}'", trim(text.substr(0, open))));

    auto const payload = trim(text.substr(open + 1, close - open - 1));
    AgentAction action { *kind, {} };
    if (*kind == ActionKind::generate)
    {
        if (payload.empty())
            throw ParseError("Generate needs a sub-question");
        action.arguments.emplace_back(payload);
        return action;
    }
    for (auto const& part: split(payload, '|'))
    {
        auto const trimmed = trim(part);
        if (!trimmed.empty())
            action.arguments.emplace_back(trimmed);
    }
    if (action.arguments.empty())
        throw ParseError(fmt::format("{} needs at least one argument", title_case(keyword)));
    if (*kind == ActionKind::complete && action.arguments.size() != 2)
        throw ParseError("Complete takes exactly [head entity | relation]");
    return action;
}

std::string Observation::render() const
{
    std::vector<std::string> lines;
    if (verified_answers)
        lines.push_back(verified_answers->empty() ? "none" : join(*verified_answers, " | "));
    for (auto const& t: triples)
        lines.push_back(t.text.render());
    for (auto const& n: notes)
        lines.push_back(n);
    if (lines.empty())
        return "no results";
    return join(lines, "\n");
}

void AgentConfig::validate() const
{
    if (max_steps == 0 || max_llm_calls_per_step == 0 || complete_top_k == 0 || relations_per_search == 0
        || search_triple_cap == 0 || generate_known_triples == 0)
        throw ArgumentError("agent limits must all be positive");
}

bool answers_match(std::string_view a, std::string_view b)
{
    return normalize_surface(a) == normalize_surface(b);
}

std::optional<SurfaceTriple> parse_triple_line(std::string_view line, const KnowledgeBase& kb)
{
    auto const body = strip_list_marker(line);
    std::vector<std::string> parts;
    for (auto const& p: split(body, ','))
        parts.emplace_back(trim(p));
    if (parts.size() < 3)
        return std::nullopt;
    for (auto const& p: parts)
        if (p.empty())
            return std::nullopt;
    if (parts.size() == 3)
        return SurfaceTriple { parts[0], parts[1], parts[2] };

    // Try every (head, relation, tail) split; prefer one whose relation is a KB label.
    for (std::size_t i = 1; i + 1 < parts.size(); ++i)
    {
        for (std::size_t j = i + 1; j < parts.size(); ++j)
        {
            std::vector<std::string> const head(parts.begin(), parts.begin() + static_cast<std::ptrdiff_t>(i));
            std::vector<std::string> const rel(parts.begin() + static_cast<std::ptrdiff_t>(i),
                                               parts.begin() + static_cast<std::ptrdiff_t>(j));
            std::vector<std::string> const tail(parts.begin() + static_cast<std::ptrdiff_t>(j), parts.end());
            auto const relation = join(rel, ", ");
            if (!kb.lookup_relation_label(relation).empty())
                return SurfaceTriple { join(head, ", "), relation, join(tail, ", ") };
        }
    }
    std::vector<std::string> const tail(parts.begin() + 2, parts.end());
    return SurfaceTriple { parts[0], parts[1], join(tail, ", ") };
}

std::vector<SurfaceTriple> parse_triple_lines(std::string_view reply, const KnowledgeBase& kb,
                                              std::vector<std::string>* rejected)
{
    std::vector<SurfaceTriple> out;
    for (auto const& raw: split(reply, '\n'))
    {
        auto line = trim(raw);
        if (line.empty() || line.starts_with("\"\"\"") || line.ends_with(":") || line.ends_with("\"\"\""))
            continue;
        if (auto t = parse_triple_line(line, kb))
            out.push_back(std::move(*t));
        else if (rejected)
            rejected->emplace_back(line);
    }
    return out;
}

std::vector<std::string> parse_cot_answers(std::string_view reply)
{
    auto const lines = split(reply, '\n');
    for (auto it = lines.rbegin(); it != lines.rend(); ++it)
    {
        auto const line = trim(*it);
        if (lower(line.substr(0, std::min<std::size_t>(7, line.size()))) != "answer:")
            continue;
        std::vector<std::string> answers;
        for (auto const& part: split(line.substr(7), '|'))
            if (auto const a = trim(part); !a.empty())
                answers.emplace_back(a);
        if (!answers.empty())
            return answers;
    }
    return { "unknown" };
}

nlohmann::json to_json(const Trajectory& trajectory, bool include_timing)
{
    auto topics = nlohmann::json::array();
    for (auto const& e: trajectory.topic_entities)
        topics.push_back(e.value);

    auto steps = nlohmann::json::array();
    for (auto const& s: trajectory.steps)
    {
        auto triples = nlohmann::json::array();
        for (auto const& t: s.observation.triples)
        {
            nlohmann::json jt { { "head", t.text.head },
                                { "relation", t.text.relation },
                                { "tail", t.text.tail },
                                { "relation_linked", t.relation_linked } };
            if (t.ids)
                jt["ids"] = { t.ids->head.value, t.ids->relation.value, t.ids->tail.value };
            triples.push_back(std::move(jt));
        }
        nlohmann::json observation { { "triples", std::move(triples) }, { "notes", s.observation.notes } };
        if (s.observation.verified_answers)
            observation["verified_answers"] = *s.observation.verified_answers;

        auto calls = nlohmann::json::array();
        for (auto c: s.calls)
            calls.push_back(to_string(c));

        nlohmann::json step { { "index", s.index }, { "thought", s.thought } };
        if (s.action)
            step["action"] = { { "kind", to_string(s.action->kind) },
                               { "arguments", s.action->arguments },
                               { "text", s.action->render() } };
        else
            step["action"] = nullptr;
        step["observation"] = std::move(observation);
        step["calls"] = std::move(calls);
        if (include_timing)
            step["seconds"] = s.seconds;
        steps.push_back(std::move(step));
    }

    nlohmann::json j { { "question", trajectory.question },
                       { "topic_entities", std::move(topics) },
                       { "mode", to_string(trajectory.mode) } };
    if (trajectory.mode == AgentMode::train)
        j["gold_answers"] = trajectory.gold_answers;
    j["steps"] = std::move(steps);
    j["final_answers"] = trajectory.final_answers;
    if (trajectory.mode == AgentMode::train)
        j["verified_answers"] = trajectory.verified_answers;
    j["llm_call_count"] = trajectory.llm_call_count;
    j["termination"] = to_string(trajectory.termination);
    if (!trajectory.error.empty())
        j["error"] = trajectory.error;
    if (include_timing)
        j["wall_seconds"] = trajectory.wall_seconds;
    return j;
}

// ---------------------------------------------------------------------------
// Episode execution

namespace
{

struct BudgetExhausted
{
};

struct StepText
{
    std::string thought;
    std::string action;
};

/// Separates "Thought i: ...\nAction i: X[...]" and drops anything the model
/// hallucinated from "Observation" onwards.
StepText split_step_output(std::string_view reply)
{
    static const std::regex observation_re(R"((^|\n)\s*observation\b)", std::regex::icase);
    static const std::regex action_re(R"(action\s*\d*\s*:)", std::regex::icase);
    static const std::regex thought_re(R"(^\s*thought\s*\d*\s*:\s*)", std::regex::icase);
    static const std::regex bare_action_re(R"(^\s*(search|complete|generate|finish)\s*\[)", std::regex::icase);

    std::string text(reply);
    std::smatch m;
    if (std::regex_search(text, m, observation_re))
        text = text.substr(0, static_cast<std::size_t>(m.position(0)));

    StepText out;
    if (std::regex_search(text, m, action_re))
    {
        out.thought = text.substr(0, static_cast<std::size_t>(m.position(0)));
        auto rest = std::string_view(text).substr(static_cast<std::size_t>(m.position(0) + m.length(0)));
        rest = trim(rest);
        out.action = std::string(trim(rest.substr(0, rest.find('\n'))));
    }
    else
    {
        std::vector<std::string> before;
        for (auto const& line: split(text, '\n'))
        {
            if (out.action.empty() && std::regex_search(line, bare_action_re))
            {
                out.action = std::string(trim(line));
                break;
            }
            before.push_back(line);
        }
        out.thought = join(before, "\n");
    }
    out.thought = std::regex_replace(out.thought, thought_re, "");
    out.thought = std::string(trim(out.thought));
    return out;
}

std::string step_history(std::size_t index, std::string_view thought, std::string_view action,
                         std::string_view observation)
{
    return fmt::format("Thought {0}: {1}\nAction {0}: {2}\nObservation {0}: {3}\n", index, thought, action,
                       observation);
}

class Episode
{
  public:
    Episode(const KnowledgeBase& kb, const CompleterModel& completer, LlmBackend& llm, const AgentConfig& config,
            Trajectory& trajectory):
        _kb(kb), _completer(completer), _llm(llm), _config(config), _traj(trajectory), _linker(kb)
    {
    }

    void run();

  private:
    std::string call(TemplateId id, const Bindings& bindings, TrajectoryStep& step);

    Observation execute(const AgentAction& action, TrajectoryStep& step);
    Observation exec_search(const std::vector<std::string>& surfaces, TrajectoryStep& step);
    Observation exec_generate(const std::string& sub_question, TrajectoryStep& step);
    Observation exec_complete(const std::string& entity, const std::string& relation, TrajectoryStep& step);
    Observation exec_finish(const std::vector<std::string>& answers);

    std::optional<EntityId> resolve_entity(const std::string& surface, TrajectoryStep& step, Observation& obs);
    std::vector<RelationId> select_relations(const EntityId& e, TrajectoryStep& step, Observation& obs);
    std::vector<ObservedTriple> link_surface_triples(const std::vector<SurfaceTriple>& triples);
    ObservedTriple observe(const Triple& t) const;

    Bindings agent_bindings(std::size_t index, const std::string& history) const;
    [[nodiscard]] bool train() const { return _traj.mode == AgentMode::train; }

    const KnowledgeBase& _kb;
    const CompleterModel& _completer;
    LlmBackend& _llm;
    const AgentConfig& _config;
    Trajectory& _traj;
    RelationLinker _linker;
    std::string _history;
};

std::string Episode::call(TemplateId id, const Bindings& bindings, TrajectoryStep& step)
{
    if (_traj.llm_call_count >= _config.call_budget())
        throw BudgetExhausted {};
    auto request = make_request(id, bindings, _config.llm);
    ++_traj.llm_call_count;
    step.calls.push_back(id);
    return _llm.chat(request);
}

Bindings Episode::agent_bindings(std::size_t index, const std::string& history) const
{
    std::vector<std::string> topics;
    for (auto const& e: _traj.topic_entities)
        topics.push_back(_kb.has_entity(e) ? _kb.label(e) : e.value);
    Bindings b { { "question", _traj.question },
                 { "topic_entities", join(topics, ", ") },
                 { "history", history },
                 { "step", std::to_string(index) } };
    if (train())
        b.emplace("answers", join(_traj.gold_answers, " | "));
    return b;
}

ObservedTriple Episode::observe(const Triple& t) const
{
    return ObservedTriple { SurfaceTriple { _kb.label(t.head), _kb.label(t.relation), _kb.label(t.tail) }, t, true };
}

void Episode::run()
{
    auto const tmpl = train() ? TemplateId::agent_train : TemplateId::agent_infer;

    for (std::size_t index = 1; index <= _config.max_steps; ++index)
    {
        auto const started = std::chrono::steady_clock::now();
        TrajectoryStep step;
        step.index = index;
        try
        {
            auto text = split_step_output(call(tmpl, agent_bindings(index, _history), step));
            std::optional<AgentAction> action;
            try
            {
                action = parse_action(text.action);
            }
            catch (const ParseError& first)
            {
                auto const retry_history = _history
                                           + step_history(index, text.thought, text.action,
                                                          fmt::format("Invalid action ({}). Use Search[...], "
                                                                      "Complete[...], Generate[...] or Finish[...].",
                                                                      first.what()));
                text = split_step_output(call(tmpl, agent_bindings(index, retry_history), step));
                try
                {
                    action = parse_action(text.action);
                }
                catch (const ParseError& second)
                {
                    step.thought = text.thought;
                    step.observation.notes.push_back(fmt::format("invalid action: {}", second.what()));
                }
            }
            step.thought = text.thought;
            if (action)
            {
                step.action = *action;
                step.observation = execute(*action, step);
            }
            _history += step_history(index, step.thought, action ? action->render() : text.action,
                                     step.observation.render());
            step.seconds = seconds_since(started);
            _traj.steps.push_back(std::move(step));
            if (action && action->kind == ActionKind::finish)
            {
                _traj.termination = Termination::finish;
                return;
            }
        }
        catch (const BudgetExhausted&)
        {
            if (step.action || !step.thought.empty())
            {
                step.observation.notes.push_back("call budget exhausted");
                step.seconds = seconds_since(started);
                _traj.steps.push_back(std::move(step));
            }
            _traj.termination = Termination::budget;
            _traj.final_answers = { "unknown" };
            return;
        }
        catch (const TransportError& e)
        {
            step.observation.notes.push_back(fmt::format("transport error: {}", e.what()));
            step.seconds = seconds_since(started);
            if (step.action)
                _traj.steps.push_back(std::move(step));
            _traj.termination = Termination::error;
            _traj.error = e.what();
            _traj.final_answers = { "unknown" };
            return;
        }
    }
    _traj.termination = Termination::max_steps;
    _traj.final_answers = { "unknown" };
}

Observation Episode::execute(const AgentAction& action, TrajectoryStep& step)
{
    switch (action.kind)
    {
        case ActionKind::search: return exec_search(action.arguments, step);
        case ActionKind::generate: return exec_generate(action.arguments.front(), step);
        case ActionKind::complete: return exec_complete(action.arguments[0], action.arguments[1], step);
        case ActionKind::finish: return exec_finish(action.arguments);
    }
    return {};
}

std::optional<EntityId> Episode::resolve_entity(const std::string& surface, TrajectoryStep& step, Observation& obs)
{
    auto candidates = _kb.lookup_label(surface);
    if (candidates.empty() && _kb.has_entity(EntityId(std::string(trim(surface)))))
        return EntityId(std::string(trim(surface)));
    if (candidates.empty())
    {
        obs.notes.push_back(fmt::format("entity not found: {}", surface));
        return std::nullopt;
    }
    if (candidates.size() == 1)
        return candidates.front();

    std::vector<std::string> lines;
    for (auto const& c: candidates)
        lines.push_back(fmt::format("{}: {}", c.value, _kb.entity(c).description));
    auto const reply = call(TemplateId::entity_select,
                            { { "thought", step.thought }, { "entity", surface }, { "candidates", join(lines, "\n") } },
                            step);

    auto answer = std::string_view(reply);
    if (auto const pos = lower(answer).rfind("answer:"); pos != std::string::npos)
        answer = answer.substr(pos + 7);
    answer = trim(answer);
    for (auto const& c: candidates)
        if (answer == c.value || answer.starts_with(c.value + " ") || answer.starts_with(c.value + "\n")
            || answer.starts_with(c.value + ":"))
            return c;
    // Otherwise the earliest candidate id mentioned anywhere in the reply.
    std::optional<EntityId> best;
    std::size_t best_pos = std::string::npos;
    for (auto const& c: candidates)
    {
        for (auto pos = reply.find(c.value); pos != std::string::npos; pos = reply.find(c.value, pos + 1))
        {
            auto const end = pos + c.value.size();
            bool const left = pos == 0 || !std::isalnum(static_cast<unsigned char>(reply[pos - 1]));
            bool const right = end == reply.size() || !std::isalnum(static_cast<unsigned char>(reply[end]));
            if (left && right && pos < best_pos)
            {
                best = c;
                best_pos = pos;
            }
        }
    }
    if (best)
        return best;
    obs.notes.push_back(fmt::format("could not disambiguate {}; using {}", surface, candidates.front().value));
    return candidates.front();
}

std::vector<RelationId> Episode::select_relations(const EntityId& e, TrajectoryStep& step, Observation& obs)
{
    auto const available = _kb.relations_of(e);
    std::vector<RelationId> const all(available.begin(), available.end());
    auto const limit = _config.relations_per_search;
    if (all.size() <= limit)
        return all;

    std::vector<std::string> labels;
    for (auto const& r: all)
        labels.push_back(_kb.label(r));
    auto const reply = call(TemplateId::relation_select,
                            { { "count", std::to_string(limit) },
                              { "thought", step.thought },
                              { "entity", _kb.label(e) },
                              { "relations", join(labels, ", ") } },
                            step);

    auto answer = std::string_view(reply);
    auto const lowered = lower(answer);
    for (std::string_view marker: { "answers:", "answer:" })
        if (auto const pos = lowered.rfind(marker); pos != std::string::npos)
        {
            answer = answer.substr(pos + marker.size());
            break;
        }

    std::vector<RelationId> chosen;
    auto add = [&](const RelationId& r) {
        if (chosen.size() < limit && std::find(chosen.begin(), chosen.end(), r) == chosen.end())
            chosen.push_back(r);
    };
    std::string flattened(answer);
    std::replace(flattened.begin(), flattened.end(), '\n', ',');
    std::replace(flattened.begin(), flattened.end(), '|', ',');
    for (auto const& piece: split(flattened, ','))
    {
        auto const wanted = normalize_surface(strip_list_marker(piece));
        for (std::size_t i = 0; i < all.size(); ++i)
            if (normalize_surface(labels[i]) == wanted)
                add(all[i]);
    }
    if (chosen.empty())
    {
        std::vector<Document> docs;
        for (std::size_t i = 0; i < all.size(); ++i)
            docs.push_back(Document { all[i].value, labels[i] });
        for (auto const& hit: Bm25Index(std::move(docs)).top_k(reply, limit))
            add(RelationId(hit.doc_id));
    }
    if (chosen.empty())
    {
        obs.notes.push_back(fmt::format("no relation selected for {}", _kb.label(e)));
        for (auto const& r: all)
            add(r);
    }
    return chosen;
}

Observation Episode::exec_search(const std::vector<std::string>& surfaces, TrajectoryStep& step)
{
    Observation obs;
    for (auto const& surface: surfaces)
    {
        auto const e = resolve_entity(surface, step, obs);
        if (!e)
            continue;
        auto const chosen = select_relations(*e, step, obs);
        auto const neighbors = _kb.neighbors(*e);
        for (auto const& r: chosen)
            for (auto const& t: neighbors)
            {
                auto observed = observe(t);
                if (t.relation == r && obs.triples.size() < _config.search_triple_cap
                    && std::find(obs.triples.begin(), obs.triples.end(), observed) == obs.triples.end())
                    obs.triples.push_back(std::move(observed));
            }
    }
    return obs;
}

std::vector<ObservedTriple> Episode::link_surface_triples(const std::vector<SurfaceTriple>& triples)
{
    std::vector<ObservedTriple> out;
    for (auto const& t: triples)
    {
        ObservedTriple o { t, std::nullopt, false };
        try
        {
            auto const r = _linker.link(t.relation);
            o.text.relation = _kb.label(r);
            o.relation_linked = true;
            auto const heads = _kb.lookup_label(t.head);
            auto const tails = _kb.lookup_label(t.tail);
            if (!heads.empty() && !tails.empty())
                o.ids = Triple { heads.front(), r, tails.front() };
        }
        catch (const LinkError&)
        {
        }
        if (std::find(out.begin(), out.end(), o) == out.end())
            out.push_back(std::move(o));
    }
    return out;
}

Observation Episode::exec_generate(const std::string& sub_question, TrajectoryStep& step)
{
    Observation obs;
    std::vector<SurfaceTriple> prior;
    for (auto const& s: _traj.steps)
        for (auto const& t: s.observation.triples)
            prior.push_back(t.text);
    std::string known;
    for (auto const& t: retrieve_related_triples(prior, sub_question, _config.generate_known_triples))
        known += t.render() + "\n";

    Bindings bindings { { "question", sub_question }, { "known_triples", known }, { "hint_line", "" } };
    if (train())
        bindings["hint_line"] = fmt::format("Hint: {}\n", join(_traj.gold_answers, " | "));
    std::vector<std::string> rejected;
    auto const generated = parse_triple_lines(call(TemplateId::triple_generate, bindings, step), _kb, &rejected);
    for (auto const& r: rejected)
        obs.notes.push_back(fmt::format("unparseable triple: {}", r));
    auto candidates = link_surface_triples(generated);
    if (candidates.empty())
        return obs;

    std::string candidate_text;
    std::vector<std::string> descriptions;
    std::vector<std::string> schemas;
    std::set<std::string> described;
    for (auto const& c: candidates)
    {
        candidate_text += c.text.render() + "\n";
        if (!c.relation_linked || !described.insert(c.text.relation).second)
            continue;
        auto const& record = _kb.relation(_linker.link(c.text.relation));
        descriptions.push_back(fmt::format("{}. {}: {}", descriptions.size() + 1, record.label, record.description));
        schemas.push_back(fmt::format("{}. {}: {}", schemas.size() + 1, record.label, record.schema));
    }
    auto const reply = call(TemplateId::triple_modify,
                            { { "question", sub_question },
                              { "known_triples", candidate_text },
                              { "descriptions", descriptions.empty() ? "" : join(descriptions, "\n") + "\n" },
                              { "schemas", schemas.empty() ? "" : join(schemas, "\n") + "\n" } },
                            step);
    std::vector<std::string> modify_rejected;
    auto modified = link_surface_triples(parse_triple_lines(reply, _kb, &modify_rejected));
    for (auto const& r: modify_rejected)
        obs.notes.push_back(fmt::format("unparseable triple: {}", r));
    if (modified.empty())
    {
        obs.notes.push_back("modification returned no triples; keeping generated triples");
        modified = std::move(candidates);
    }
    obs.triples = std::move(modified);
    return obs;
}

Observation Episode::exec_complete(const std::string& entity, const std::string& relation, TrajectoryStep& step)
{
    Observation obs;
    auto const e = resolve_entity(entity, step, obs);
    if (!e)
        return obs;
    RelationId r;
    try
    {
        r = _linker.link(relation);
    }
    catch (const LinkError&)
    {
        obs.notes.push_back(fmt::format("relation not linkable: {}", relation));
        return obs;
    }
    try
    {
        for (auto const& p: _completer.predict(CompletionQuery::for_tail(*e, r), _kb, _config.complete_top_k))
            if (std::isfinite(p.score) && _kb.has_entity(p.entity))
                obs.triples.push_back(observe(Triple { *e, r, p.entity }));
    }
    catch (const LookupError& err)
    {
        obs.notes.push_back(fmt::format("completion unavailable: {}", err.what()));
    }
    return obs;
}

Observation Episode::exec_finish(const std::vector<std::string>& answers)
{
    Observation obs;
    _traj.final_answers = answers;
    if (train())
    {
        std::vector<std::string> verified;
        for (auto const& a: answers)
        {
            if (answers_match(a, "unknown"))
                continue;
            bool const gold = std::any_of(_traj.gold_answers.begin(), _traj.gold_answers.end(),
                                          [&](const std::string& g) { return answers_match(a, g); });
            bool const seen = std::any_of(verified.begin(), verified.end(),
                                          [&](const std::string& v) { return answers_match(a, v); });
            if (gold && !seen)
                verified.push_back(a);
        }
        _traj.verified_answers = verified;
        obs.verified_answers = std::move(verified);
    }
    return obs;
}

} // namespace

Agent::Agent(const KnowledgeBase& kb, const CompleterModel& completer, LlmBackend& llm, AgentConfig config):
    _kb(&kb), _completer(&completer), _llm(&llm), _config(std::move(config))
{
    _config.validate();
}

Trajectory Agent::run_episode(std::string_view question, const std::vector<EntityId>& topic_entities,
                              const std::optional<std::vector<std::string>>& gold_answers)
{
    auto const started = std::chrono::steady_clock::now();
    Trajectory traj;
    traj.question = std::string(question);
    traj.topic_entities = topic_entities;
    traj.mode = gold_answers ? AgentMode::train : AgentMode::infer;
    if (gold_answers)
        traj.gold_answers = *gold_answers;

    if (topic_entities.empty())
    {
        traj.termination = Termination::fallback;
        try
        {
            if (_config.call_budget() == 0)
                throw BudgetExhausted {};
            ++traj.llm_call_count;
            auto const reply = _llm->chat(make_request(TemplateId::cot, { { "question", traj.question } }, _config.llm));
            traj.final_answers = parse_cot_answers(reply);
        }
        catch (const TransportError& e)
        {
            traj.termination = Termination::error;
            traj.error = e.what();
            traj.final_answers = { "unknown" };
        }
        if (gold_answers)
            for (auto const& a: traj.final_answers)
                for (auto const& g: *gold_answers)
                    if (answers_match(a, g) && !answers_match(a, "unknown"))
                    {
                        traj.verified_answers.push_back(a);
                        break;
                    }
        traj.wall_seconds = seconds_since(started);
        return traj;
    }

    Episode episode(*_kb, *_completer, *_llm, _config, traj);
    episode.run();
    traj.wall_seconds = seconds_since(started);
    return traj;
}

} // namespace jointkb
