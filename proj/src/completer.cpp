// SPDX-License-Identifier: Apache-2.0
#include "jointkb/completer.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace jointkb
{

CompletionQuery CompletionQuery::for_tail(EntityId h, RelationId r)
{
    return CompletionQuery { QueryMode::tail, std::move(h), std::move(r), std::nullopt };
}

CompletionQuery CompletionQuery::for_head(RelationId r, EntityId t)
{
    return CompletionQuery { QueryMode::head, std::nullopt, std::move(r), std::move(t) };
}

CompletionQuery CompletionQuery::for_relation(EntityId h, EntityId t)
{
    return CompletionQuery { QueryMode::relation, std::move(h), std::nullopt, std::move(t) };
}

void CompletionQuery::validate() const
{
    bool const ok = [&] {
        switch (mode)
        {
            case QueryMode::tail: return head && relation && !tail;
            case QueryMode::head: return !head && relation && tail;
            case QueryMode::relation: return head && !relation && tail;
        }
        return false;
    }();
    if (!ok)
        throw ArgumentError("completion query must leave exactly the slot named by its mode empty");
}

namespace
{

std::string render_context(const KnowledgeBase& kb, const std::vector<Triple>& context)
{
    std::vector<std::string> parts;
    parts.reserve(context.size());
    for (auto const& t: context)
        parts.push_back(fmt::format("< {} | {} | {} >", kb.label(t.head), kb.label(t.relation), kb.label(t.tail)));
    return join(parts, " <SEP> ");
}

std::vector<Triple> relation_mode_context(const KnowledgeBase& kb, const EntityId& h, const EntityId& t,
                                          std::size_t max_size)
{
    auto neighbors = kb.neighbors(h);
    std::erase_if(neighbors, [&](const Triple& x) {
        return (x.head == h && x.tail == t) || (x.head == t && x.tail == h);
    });
    if (neighbors.size() > max_size)
        neighbors.resize(max_size);
    return neighbors;
}

} // namespace

InputSequence build_input_sequence(const KnowledgeBase& kb, const CompletionQuery& query, std::size_t max_context)
{
    query.validate();

    std::string directive;
    const EntityRecord* described = nullptr;
    std::string relationship_line;
    std::vector<Triple> context;

    switch (query.mode)
    {
        case QueryMode::tail:
        {
            auto const& h = kb.entity(*query.head);
            auto const& r = kb.relation(*query.relation);
            directive = fmt::format("predict tail: {} | {}", h.label, r.label);
            described = &h;
            relationship_line = fmt::format("related relationship: {}\n", r.label);
            context = select_context(kb, h.id, r.id, max_context);
            break;
        }
        case QueryMode::head:
        {
            auto const& t = kb.entity(*query.tail);
            auto const& r = kb.relation(*query.relation);
            directive = fmt::format("predict head: {} | {}", t.label, r.label);
            described = &t;
            relationship_line = fmt::format("related relationship: {}\n", r.label);
            context = select_context_for_head(kb, r.id, t.id, max_context);
            break;
        }
        case QueryMode::relation:
        {
            auto const& h = kb.entity(*query.head);
            auto const& t = kb.entity(*query.tail);
            directive = fmt::format("predict relation: {} | {}", h.label, t.label);
            described = &h;
            context = relation_mode_context(kb, h.id, t.id, max_context);
            break;
        }
    }

    auto const rendered = render_context(kb, context);
    return InputSequence { fmt::format("{}\nentity description: {} [{}]\n{}context:{}{}", directive, described->label,
                                       described->description, relationship_line, rendered.empty() ? "" : " ",
                                       rendered) };
}

ReplayMemory::ReplayMemory(std::vector<Triple> pool, std::uint64_t seed): _pool(std::move(pool)), _rng(seed) {}

ReplayMemory::ReplayMemory(const TripleSet& pool, std::uint64_t seed):
    ReplayMemory(std::vector<Triple>(pool.begin(), pool.end()), seed)
{
}

std::vector<Triple> ReplayMemory::sample(std::size_t n)
{
    n = std::min(n, _pool.size());
    // Partial Fisher-Yates over an index permutation: n distinct draws.
    std::vector<std::size_t> index(_pool.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        index[i] = i;
    std::vector<Triple> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        auto const j = i + static_cast<std::size_t>(_rng.below(index.size() - i));
        std::swap(index[i], index[j]);
        out.push_back(_pool[index[i]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// NativeCompleter

namespace
{

constexpr double adam_beta1 = 0.9;
constexpr double adam_beta2 = 0.999;
constexpr double adam_epsilon = 1e-8;

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

template <typename Ranked, typename Id>
std::vector<Ranked> top_by_score(std::vector<Ranked> all, std::size_t k, Id Ranked::*id)
{
    auto const better = [id](const Ranked& a, const Ranked& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.*id < b.*id;
    };
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
    return all;
}

} // namespace

void NativeCompleter::append_row(Parameters& params, Rng& rng)
{
    auto const bound = 1.0 / std::sqrt(static_cast<double>(_dim));
    for (std::size_t i = 0; i < _dim; ++i)
    {
        params.values.push_back(rng.uniform(-bound, bound));
        params.first_moment.push_back(0.0);
        params.second_moment.push_back(0.0);
    }
}

std::size_t NativeCompleter::register_entity(const EntityId& e, Rng& rng)
{
    if (auto it = _entity_rows.find(e); it != _entity_rows.end())
        return it->second;
    auto const row = _entity_ids.size();
    _entity_ids.push_back(e);
    _entity_rows.emplace(e, row);
    append_row(_entities, rng);
    return row;
}

std::size_t NativeCompleter::register_relation(const RelationId& r, Rng& rng)
{
    if (auto it = _relation_rows.find(r); it != _relation_rows.end())
        return it->second;
    auto const row = _relation_ids.size();
    _relation_ids.push_back(r);
    _relation_rows.emplace(r, row);
    append_row(_relations, rng);
    return row;
}

std::size_t NativeCompleter::entity_row(const EntityId& e) const
{
    auto it = _entity_rows.find(e);
    if (it == _entity_rows.end())
        throw LookupError(fmt::format("entity {} is unknown to the completer", e.value));
    return it->second;
}

std::size_t NativeCompleter::relation_row(const RelationId& r) const
{
    auto it = _relation_rows.find(r);
    if (it == _relation_rows.end())
        throw LookupError(fmt::format("relation {} is unknown to the completer", r.value));
    return it->second;
}

std::span<const double> NativeCompleter::entity_embedding(const EntityId& e) const
{
    return std::span<const double>(_entities.values).subspan(entity_row(e) * _dim, _dim);
}

std::span<const double> NativeCompleter::relation_embedding(const RelationId& r) const
{
    return std::span<const double>(_relations.values).subspan(relation_row(r) * _dim, _dim);
}

void NativeCompleter::require_trained() const
{
    if (!_trained)
        throw StateError("native completer has not been trained");
}

TrainingReport NativeCompleter::pretrain(const TripleSet& train, const KnowledgeBase& kb, const TrainingConfig& config)
{
    if (train.empty())
        throw ArgumentError("pretraining needs at least one triple");
    if (config.dim == 0 || config.batch_size == 0)
        throw ArgumentError("embedding width and batch size must be positive");

    *this = NativeCompleter {};
    _dim = config.dim;
    _init_seed = config.seed;

    Rng init(config.seed);
    for (auto const& [id, record]: kb.entities())
        register_entity(id, init);
    for (auto const& [id, record]: kb.relations())
        register_relation(id, init);

    std::vector<Triple> order(train.begin(), train.end());
    for (auto const& t: order)
        if (!_entity_rows.contains(t.head) || !_entity_rows.contains(t.tail) || !_relation_rows.contains(t.relation))
            throw LookupError(fmt::format("training triple ({}, {}, {}) is not in the knowledge base", t.head.value,
                                          t.relation.value, t.tail.value));

    Rng shuffler(config.seed ^ 0x5bd1e995ULL);
    TrainingReport report;
    _trained = true;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch)
    {
        shuffler.shuffle(std::span<Triple>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size)
        {
            auto const count = std::min(config.batch_size, order.size() - start);
            auto const loss = train_batch(std::span<const Triple>(order).subspan(start, count), config);
            total += loss * static_cast<double>(count);
        }
        report.epoch_losses.push_back(total / static_cast<double>(order.size()));
    }
    return report;
}

std::vector<double> NativeCompleter::entity_scores(std::span<const double> query) const
{
    std::vector<double> scores(_entity_ids.size());
    std::span<const double> const all(_entities.values);
    for (std::size_t j = 0; j < scores.size(); ++j)
        scores[j] = dot(query, all.subspan(j * _dim, _dim));
    return scores;
}

double NativeCompleter::train_batch(std::span<const Triple> batch, const TrainingConfig& config)
{
    if (batch.empty())
        return 0.0;
    if (_dim == 0)
        throw StateError("native completer has no parameters; pretrain first");

    auto const n_entities = _entity_ids.size();
    std::vector<double> grad_entities(_entities.values.size(), 0.0);
    std::vector<double> grad_relations(_relations.values.size(), 0.0);
    std::vector<double> query(_dim);
    std::vector<double> grad_query(_dim);
    auto const scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;

    for (auto const& t: batch)
    {
        auto const h = entity_row(t.head);
        auto const r = relation_row(t.relation);
        auto const tail = entity_row(t.tail);
        auto const* eh = &_entities.values[h * _dim];
        auto const* wr = &_relations.values[r * _dim];
        for (std::size_t i = 0; i < _dim; ++i)
            query[i] = eh[i] * wr[i];

        auto probs = entity_scores(query);
        auto const max_logit = *std::max_element(probs.begin(), probs.end());
        double z = 0.0;
        for (auto& p: probs)
        {
            p = std::exp(p - max_logit);
            z += p;
        }
        for (auto& p: probs)
            p /= z;
        auto const p_gold = probs[tail];
        loss += -std::log(std::max(p_gold, std::numeric_limits<double>::min()));

        // dL/dlogit_j = p_j - [j == tail]
        probs[tail] -= 1.0;
        std::fill(grad_query.begin(), grad_query.end(), 0.0);
        for (std::size_t j = 0; j < n_entities; ++j)
        {
            auto const g = probs[j] * scale;
            auto const* ej = &_entities.values[j * _dim];
            auto* gej = &grad_entities[j * _dim];
            for (std::size_t i = 0; i < _dim; ++i)
            {
                grad_query[i] += g * ej[i];
                gej[i] += g * query[i];
            }
        }
        auto* geh = &grad_entities[h * _dim];
        auto* gwr = &grad_relations[r * _dim];
        for (std::size_t i = 0; i < _dim; ++i)
        {
            geh[i] += grad_query[i] * wr[i];
            gwr[i] += grad_query[i] * eh[i];
        }
    }

    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss))
        throw TrainingError(fmt::format("non-finite loss on batch starting with ({}, {}, {}) at step {}",
                                        batch.front().head.value, batch.front().relation.value,
                                        batch.front().tail.value, _step));

    ++_step;
    apply_update(_entities, grad_entities, config);
    apply_update(_relations, grad_relations, config);
    return loss;
}

void NativeCompleter::apply_update(Parameters& params, const std::vector<double>& grad, const TrainingConfig& config)
{
    auto const lr = config.learning_rate;
    if (config.optimizer == OptimizerKind::sgd)
    {
        for (std::size_t i = 0; i < grad.size(); ++i)
            params.values[i] -= lr * grad[i];
        return;
    }

    auto const t = static_cast<double>(_step);
    auto const correction1 = 1.0 - std::pow(adam_beta1, t);
    auto const correction2 = 1.0 - std::pow(adam_beta2, t);
    for (std::size_t i = 0; i < grad.size(); ++i)
    {
        auto& m = params.first_moment[i];
        auto& v = params.second_moment[i];
        m = adam_beta1 * m + (1.0 - adam_beta1) * grad[i];
        v = adam_beta2 * v + (1.0 - adam_beta2) * grad[i] * grad[i];
        params.values[i] -= lr * (m / correction1) / (std::sqrt(v / correction2) + adam_epsilon);
    }
}

bool operator==(const NativeCompleter& a, const NativeCompleter& b)
{
    return a._dim == b._dim && a._trained == b._trained && a._step == b._step && a._init_seed == b._init_seed
           && a._registrations == b._registrations && a._entity_ids == b._entity_ids
           && a._relation_ids == b._relation_ids && a._entities == b._entities && a._relations == b._relations;
}

std::vector<RankedPrediction> NativeCompleter::predict(const CompletionQuery& query, const KnowledgeBase& kb,
                                                       std::size_t k) const
{
    query.validate();
    require_trained();
    if (query.mode == QueryMode::relation)
        throw ArgumentError("use predict_relation for relation queries");

    // The diagonal bilinear form is symmetric in head and tail, so both query
    // directions reduce to anchor ∘ relation dotted with every candidate.
    auto const& anchor = query.mode == QueryMode::tail ? *query.head : *query.tail;
    auto const a = entity_embedding(anchor);
    auto const w = relation_embedding(*query.relation);
    std::vector<double> q(_dim);
    for (std::size_t i = 0; i < _dim; ++i)
        q[i] = a[i] * w[i];

    auto const scores = entity_scores(q);
    std::vector<RankedPrediction> all;
    all.reserve(scores.size());
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (kb.has_entity(_entity_ids[j]))
            all.push_back(RankedPrediction { _entity_ids[j], scores[j] });
    return top_by_score(std::move(all), k, &RankedPrediction::entity);
}

std::vector<RankedRelation> NativeCompleter::predict_relation(const CompletionQuery& query, const KnowledgeBase& kb,
                                                              std::size_t k) const
{
    query.validate();
    require_trained();
    if (query.mode != QueryMode::relation)
        throw ArgumentError("predict_relation expects a relation query");

    auto const h = entity_embedding(*query.head);
    auto const t = entity_embedding(*query.tail);
    std::vector<double> ht(_dim);
    for (std::size_t i = 0; i < _dim; ++i)
        ht[i] = h[i] * t[i];

    std::vector<RankedRelation> all;
    for (std::size_t j = 0; j < _relation_ids.size(); ++j)
    {
        auto const& id = _relation_ids[j];
        if (id.value == noop_relation || !kb.has_relation(id))
            continue;
        all.push_back(RankedRelation { id, dot(ht, std::span<const double>(_relations.values).subspan(j * _dim, _dim)) });
    }
    return top_by_score(std::move(all), k, &RankedRelation::relation);
}

double NativeCompleter::score_triple(const Triple& triple, const KnowledgeBase& kb) const
{
    require_trained();
    (void)kb.entity(triple.head);
    (void)kb.entity(triple.tail);
    (void)kb.relation(triple.relation);
    auto const h = entity_embedding(triple.head);
    auto const w = relation_embedding(triple.relation);
    auto const t = entity_embedding(triple.tail);
    double s = 0.0;
    for (std::size_t i = 0; i < _dim; ++i)
        s += h[i] * w[i] * t[i];
    return s;
}

FinetuneReport NativeCompleter::incremental_finetune(std::span<const Triple> path, ReplayMemory& memory,
                                                     std::size_t samples_per_triple, const KnowledgeBase& kb,
                                                     const TrainingConfig& config)
{
    FinetuneReport report;
    if (path.empty())
        return report;
    require_trained();

    Rng init(_init_seed ^ (0x9e3779b97f4a7c15ULL * ++_registrations));
    auto const entities_before = _entity_ids.size();
    auto const relations_before = _relation_ids.size();
    for (auto const& t: path)
    {
        (void)kb.entity(t.head);
        (void)kb.entity(t.tail);
        (void)kb.relation(t.relation);
        register_entity(t.head, init);
        register_entity(t.tail, init);
        register_relation(t.relation, init);
    }
    report.new_entities = _entity_ids.size() - entities_before;
    report.new_relations = _relation_ids.size() - relations_before;

    std::vector<Triple> batch(path.begin(), path.end());
    auto replay = memory.sample(samples_per_triple * path.size());
    report.path_triples = path.size();
    report.replay_triples = replay.size();
    batch.insert(batch.end(), replay.begin(), replay.end());

    Rng shuffler(init.engine()());
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t pass = 0; pass < std::max<std::size_t>(1, config.finetune_passes); ++pass)
    {
        shuffler.shuffle(std::span<Triple>(batch));
        for (std::size_t start = 0; start < batch.size(); start += config.batch_size)
        {
            auto const count = std::min(config.batch_size, batch.size() - start);
            total += train_batch(std::span<const Triple>(batch).subspan(start, count), config)
                     * static_cast<double>(count);
            seen += count;
        }
    }
    report.mean_loss = total / static_cast<double>(seen);
    return report;
}

void NativeCompleter::save(const std::filesystem::path& path) const
{
    require_trained();
    nlohmann::json j;
    j["kind"] = "native";
    j["dim"] = _dim;
    j["step"] = _step;
    j["init_seed"] = _init_seed;
    j["registrations"] = _registrations;
    auto& entities = j["entities"] = nlohmann::json::array();
    for (auto const& e: _entity_ids)
        entities.push_back(e.value);
    auto& relations = j["relations"] = nlohmann::json::array();
    for (auto const& r: _relation_ids)
        relations.push_back(r.value);
    auto dump = [](const Parameters& p) {
        return nlohmann::json {
            { "values", p.values },
            { "first_moment", p.first_moment },
            { "second_moment", p.second_moment },
        };
    };
    j["entity_parameters"] = dump(_entities);
    j["relation_parameters"] = dump(_relations);

    auto const tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw Error(fmt::format("cannot write {}", tmp));
        out << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

NativeCompleter NativeCompleter::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError(fmt::format("cannot open checkpoint {}", path.string()));
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw LoadError(fmt::format("checkpoint {} is not valid JSON: {}", path.string(), e.what()));
    }
    if (j.value("kind", "") != "native")
        throw LoadError(fmt::format("checkpoint {} is not a native completer", path.string()));

    NativeCompleter model;
    try
    {
        model._dim = j.at("dim").get<std::size_t>();
        model._step = j.at("step").get<std::uint64_t>();
        model._init_seed = j.at("init_seed").get<std::uint64_t>();
        model._registrations = j.at("registrations").get<std::uint64_t>();
        for (auto const& e: j.at("entities"))
        {
            model._entity_rows.emplace(EntityId(e.get<std::string>()), model._entity_ids.size());
            model._entity_ids.emplace_back(e.get<std::string>());
        }
        for (auto const& r: j.at("relations"))
        {
            model._relation_rows.emplace(RelationId(r.get<std::string>()), model._relation_ids.size());
            model._relation_ids.emplace_back(r.get<std::string>());
        }
        auto read = [](const nlohmann::json& p, Parameters& out) {
            out.values = p.at("values").get<std::vector<double>>();
            out.first_moment = p.at("first_moment").get<std::vector<double>>();
            out.second_moment = p.at("second_moment").get<std::vector<double>>();
        };
        read(j.at("entity_parameters"), model._entities);
        read(j.at("relation_parameters"), model._relations);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw LoadError(fmt::format("checkpoint {} is malformed: {}", path.string(), e.what()));
    }
    if (model._entities.values.size() != model._entity_ids.size() * model._dim
        || model._relations.values.size() != model._relation_ids.size() * model._dim)
        throw LoadError(fmt::format("checkpoint {} has inconsistent matrix sizes", path.string()));
    model._trained = true;
    return model;
}

// ---------------------------------------------------------------------------
// RemoteCompleter

namespace
{

nlohmann::json label_triples(const KnowledgeBase& kb, std::span<const Triple> triples)
{
    auto out = nlohmann::json::array();
    for (auto const& t: triples)
        out.push_back({ kb.label(t.head), kb.label(t.relation), kb.label(t.tail) });
    return out;
}

} // namespace

RemoteCompleter::RemoteCompleter(RemoteCompleterConfig config):
    _config(std::move(config)), _address(EndpointAddress::parse(_config.endpoint))
{
}

std::vector<RemoteCompleter::Sample> RemoteCompleter::generate(const InputSequence& sequence) const
{
    auto const response = post_json(_address, "/generate",
                                     { { "sequence", sequence.text },
                                       { "num_samples", _config.num_samples },
                                       { "temperature", _config.temperature } },
                                     {}, _config.timeout);
    std::vector<Sample> samples;
    try
    {
        for (auto const& s: response.at("samples"))
            samples.push_back(Sample { s.at("text").get<std::string>(), s.at("logprob").get<double>() });
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TransportError(fmt::format("completer endpoint sent an unexpected /generate response: {}", e.what()));
    }
    return samples;
}

TrainingReport RemoteCompleter::pretrain(const TripleSet& train, const KnowledgeBase& kb, const TrainingConfig&)
{
    if (train.empty())
        throw ArgumentError("pretraining needs at least one triple");
    std::vector<Triple> triples(train.begin(), train.end());
    post_json(_address, "/pretrain", { { "triples", label_triples(kb, triples) } }, {}, _config.timeout);
    return {};
}

std::vector<RankedPrediction> RemoteCompleter::predict(const CompletionQuery& query, const KnowledgeBase& kb,
                                                       std::size_t k) const
{
    query.validate();
    if (query.mode == QueryMode::relation)
        throw ArgumentError("use predict_relation for relation queries");

    // Several sampled sequences may decode to the same entity; keep the best.
    std::map<EntityId, double> best;
    for (auto const& sample: generate(build_input_sequence(kb, query, _config.max_context)))
    {
        for (auto const& id: kb.lookup_label(sample.text))
        {
            auto [it, inserted] = best.emplace(id, sample.logprob);
            if (!inserted)
                it->second = std::max(it->second, sample.logprob);
        }
    }

    std::vector<RankedPrediction> all;
    for (auto const& [id, score]: best)
        if (std::isfinite(score))
            all.push_back(RankedPrediction { id, score });
    return top_by_score(std::move(all), k, &RankedPrediction::entity);
}

std::vector<RankedRelation> RemoteCompleter::predict_relation(const CompletionQuery& query, const KnowledgeBase& kb,
                                                              std::size_t k) const
{
    query.validate();
    if (query.mode != QueryMode::relation)
        throw ArgumentError("predict_relation expects a relation query");

    std::map<RelationId, double> best;
    for (auto const& sample: generate(build_input_sequence(kb, query, _config.max_context)))
    {
        for (auto const& id: kb.lookup_relation_label(sample.text))
        {
            if (id.value == noop_relation)
                continue;
            auto [it, inserted] = best.emplace(id, sample.logprob);
            if (!inserted)
                it->second = std::max(it->second, sample.logprob);
        }
    }
    std::vector<RankedRelation> all;
    for (auto const& [id, score]: best)
        if (std::isfinite(score))
            all.push_back(RankedRelation { id, score });
    return top_by_score(std::move(all), k, &RankedRelation::relation);
}

double RemoteCompleter::score_triple(const Triple& triple, const KnowledgeBase& kb) const
{
    auto const sequence = build_input_sequence(kb, CompletionQuery::for_tail(triple.head, triple.relation),
                                               _config.max_context);
    auto const response = post_json(_address, "/score", { { "sequence", sequence.text }, { "target", kb.label(triple.tail) } },
                                    {}, _config.timeout);
    try
    {
        return response.at("logprob").get<double>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TransportError(fmt::format("completer endpoint sent an unexpected /score response: {}", e.what()));
    }
}

FinetuneReport RemoteCompleter::incremental_finetune(std::span<const Triple> path, ReplayMemory& memory,
                                                     std::size_t samples_per_triple, const KnowledgeBase& kb,
                                                     const TrainingConfig&)
{
    FinetuneReport report;
    if (path.empty())
        return report;
    auto const replay = memory.sample(samples_per_triple * path.size());
    post_json(_address, "/finetune",
              { { "triples", label_triples(kb, path) }, { "replay", label_triples(kb, replay) } }, {},
              _config.timeout);
    report.path_triples = path.size();
    report.replay_triples = replay.size();
    return report;
}

} // namespace jointkb
