// SPDX-License-Identifier: Apache-2.0
#include "jointkb/kb_store.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/rng.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace jointkb
{

namespace
{

const std::vector<Triple> empty_edges;

// Reads a tab-separated file, handing each non-empty line's fields to `on_row`
// together with the 1-based line number.
template <typename OnRow>
void read_tsv(const std::filesystem::path& path, OnRow&& on_row)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError(fmt::format("cannot open {}", path.string()));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        on_row(split(line, '\t'), line_no);
    }
}

std::string where(const std::filesystem::path& path, std::size_t line_no)
{
    return fmt::format("{}:{}", path.string(), line_no);
}

} // namespace

KnowledgeBase::KnowledgeBase()
{
    add_relation(RelationRecord {
        .id = RelationId(std::string(noop_relation)),
        .label = std::string(noop_relation),
        .description = "placeholder self-loop for entities without neighbors",
        .schema = "",
    });
}

void KnowledgeBase::add_entity(EntityRecord record)
{
    if (record.id.empty())
        throw ArgumentError("entity id must be non-empty");
    if (trim(record.label).empty())
        throw ArgumentError(fmt::format("entity {} has an empty label", record.id.value));
    if (auto it = _entities.find(record.id); it != _entities.end())
    {
        if (it->second.label != record.label || it->second.description != record.description)
            throw ArgumentError(fmt::format("conflicting definitions for entity {}", record.id.value));
        return;
    }
    _catalog[normalize_surface(record.label)].push_back(record.id);
    auto& bucket = _catalog[normalize_surface(record.label)];
    std::sort(bucket.begin(), bucket.end());
    auto id = record.id;
    _entities.emplace(std::move(id), std::move(record));
}

void KnowledgeBase::add_relation(RelationRecord record)
{
    if (record.id.empty())
        throw ArgumentError("relation id must be non-empty");
    if (trim(record.label).empty())
        throw ArgumentError(fmt::format("relation {} has an empty label", record.id.value));
    if (auto it = _relations.find(record.id); it != _relations.end())
    {
        // The reserved noop relation may also appear in relation files.
        if (record.id.value == noop_relation)
            return;
        if (it->second.label != record.label || it->second.description != record.description
            || it->second.schema != record.schema)
            throw ArgumentError(fmt::format("conflicting definitions for relation {}", record.id.value));
        return;
    }

    auto const old_stride = _stride;
    auto const new_stride = old_stride + 1;
    std::vector<std::uint64_t> grown(new_stride * new_stride, 0);
    for (std::size_t i = 0; i < old_stride; ++i)
        for (std::size_t j = 0; j < old_stride; ++j)
            grown[i * new_stride + j] = _cooc[i * old_stride + j];
    _cooc = std::move(grown);
    _stride = new_stride;
    _relation_slots.emplace(record.id, old_stride);

    auto& bucket = _relation_catalog[normalize_surface(record.label)];
    bucket.push_back(record.id);
    std::sort(bucket.begin(), bucket.end());
    auto id = record.id;
    _relations.emplace(std::move(id), std::move(record));
}

bool KnowledgeBase::add_triple(const Triple& triple)
{
    if (!has_entity(triple.head))
        throw LookupError(fmt::format("unknown entity {}", triple.head.value));
    if (!has_entity(triple.tail))
        throw LookupError(fmt::format("unknown entity {}", triple.tail.value));
    if (!has_relation(triple.relation))
        throw LookupError(fmt::format("unknown relation {}", triple.relation.value));

    if (!_triples.insert(triple).second)
        return false;
    _out[triple.head].push_back(triple);
    _in[triple.tail].push_back(triple);
    bump_cooccurrence(triple.head, triple.relation);
    bump_cooccurrence(triple.tail, triple.relation);
    return true;
}

void KnowledgeBase::bump_cooccurrence(const EntityId& e, const RelationId& r)
{
    if (r.value == noop_relation)
        return;
    auto& incident = _incident[e];
    if (incident.contains(r))
        return;
    auto const slot = relation_slot(r);
    for (auto const& other: incident)
    {
        auto const o = relation_slot(other);
        ++_cooc[slot * _stride + o];
        ++_cooc[o * _stride + slot];
    }
    ++_cooc[slot * _stride + slot];
    incident.insert(r);
}

std::size_t KnowledgeBase::relation_slot(const RelationId& r) const
{
    auto it = _relation_slots.find(r);
    if (it == _relation_slots.end())
        throw LookupError(fmt::format("unknown relation {}", r.value));
    return it->second;
}

std::size_t KnowledgeBase::add_noop_loops_for_isolated()
{
    RelationId const noop { std::string(noop_relation) };
    std::size_t added = 0;
    for (auto const& [id, record]: _entities)
    {
        if (out_edges(id).empty() && in_edges(id).empty())
            added += add_triple(Triple { id, noop, id }) ? 1 : 0;
    }
    return added;
}

KnowledgeBase KnowledgeBase::with_triples(const TripleSet& triples) const
{
    KnowledgeBase kb;
    for (auto const& [id, record]: _relations)
        kb.add_relation(record);
    for (auto const& [id, record]: _entities)
        kb.add_entity(record);
    for (auto const& t: triples)
        kb.add_triple(t);
    kb.add_noop_loops_for_isolated();
    return kb;
}

bool KnowledgeBase::has_entity(const EntityId& id) const
{
    return _entities.contains(id);
}

bool KnowledgeBase::has_relation(const RelationId& id) const
{
    return _relations.contains(id);
}

const EntityRecord& KnowledgeBase::entity(const EntityId& id) const
{
    auto it = _entities.find(id);
    if (it == _entities.end())
        throw LookupError(fmt::format("unknown entity {}", id.value));
    return it->second;
}

const RelationRecord& KnowledgeBase::relation(const RelationId& id) const
{
    auto it = _relations.find(id);
    if (it == _relations.end())
        throw LookupError(fmt::format("unknown relation {}", id.value));
    return it->second;
}

const std::vector<Triple>& KnowledgeBase::out_edges(const EntityId& id) const
{
    auto it = _out.find(id);
    return it == _out.end() ? empty_edges : it->second;
}

const std::vector<Triple>& KnowledgeBase::in_edges(const EntityId& id) const
{
    auto it = _in.find(id);
    return it == _in.end() ? empty_edges : it->second;
}

std::vector<EntityId> KnowledgeBase::lookup_label(std::string_view surface) const
{
    auto it = _catalog.find(normalize_surface(surface));
    return it == _catalog.end() ? std::vector<EntityId> {} : it->second;
}

std::vector<RelationId> KnowledgeBase::lookup_relation_label(std::string_view surface) const
{
    auto it = _relation_catalog.find(normalize_surface(surface));
    return it == _relation_catalog.end() ? std::vector<RelationId> {} : it->second;
}

std::vector<Triple> KnowledgeBase::neighbors(const EntityId& e) const
{
    if (!has_entity(e))
        throw LookupError(fmt::format("unknown entity {}", e.value));

    struct Keyed
    {
        const Triple* triple;
        const EntityId* counterpart;
        int direction; // 0 = outgoing, 1 = incoming
    };
    std::vector<Keyed> keyed;
    for (auto const& t: out_edges(e))
        if (t.relation.value != noop_relation)
            keyed.push_back({ &t, &t.tail, 0 });
    for (auto const& t: in_edges(e))
        if (t.relation.value != noop_relation && t.head != e)
            keyed.push_back({ &t, &t.head, 1 });

    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.triple->relation != b.triple->relation)
            return a.triple->relation < b.triple->relation;
        if (*a.counterpart != *b.counterpart)
            return *a.counterpart < *b.counterpart;
        return a.direction < b.direction;
    });

    std::vector<Triple> out;
    out.reserve(keyed.size());
    for (auto const& k: keyed)
        out.push_back(*k.triple);
    return out;
}

std::set<RelationId> KnowledgeBase::relations_of(const EntityId& e) const
{
    if (!has_entity(e))
        throw LookupError(fmt::format("unknown entity {}", e.value));
    auto it = _incident.find(e);
    return it == _incident.end() ? std::set<RelationId> {} : it->second;
}

std::uint64_t KnowledgeBase::cooccurrence_score(const RelationId& r, const RelationId& r_hat) const
{
    return _cooc[relation_slot(r) * _stride + relation_slot(r_hat)];
}

KnowledgeBase load_kb(const std::filesystem::path& triples_path,
                      const std::filesystem::path& entities_path,
                      const std::filesystem::path& relations_path)
{
    KnowledgeBase kb;

    read_tsv(relations_path, [&](const std::vector<std::string>& f, std::size_t line_no) {
        if (f.size() < 2 || f.size() > 4)
            throw LoadError(fmt::format("{}: expected id<TAB>label<TAB>description<TAB>schema",
                                        where(relations_path, line_no)));
        try
        {
            kb.add_relation(RelationRecord {
                .id = RelationId(std::string(trim(f[0]))),
                .label = std::string(trim(f[1])),
                .description = f.size() > 2 ? std::string(trim(f[2])) : std::string {},
                .schema = f.size() > 3 ? std::string(trim(f[3])) : std::string {},
            });
        }
        catch (const ArgumentError& e)
        {
            throw LoadError(fmt::format("{}: {}", where(relations_path, line_no), e.what()));
        }
    });

    read_tsv(entities_path, [&](const std::vector<std::string>& f, std::size_t line_no) {
        if (f.size() < 2 || f.size() > 3)
            throw LoadError(fmt::format("{}: expected id<TAB>label<TAB>description", where(entities_path, line_no)));
        try
        {
            kb.add_entity(EntityRecord {
                .id = EntityId(std::string(trim(f[0]))),
                .label = std::string(trim(f[1])),
                .description = f.size() > 2 ? std::string(trim(f[2])) : std::string {},
            });
        }
        catch (const ArgumentError& e)
        {
            throw LoadError(fmt::format("{}: {}", where(entities_path, line_no), e.what()));
        }
    });

    for (auto const& t: load_triples(triples_path, kb))
        kb.add_triple(t);
    return kb;
}

TripleSet load_triples(const std::filesystem::path& path, const KnowledgeBase& kb)
{
    TripleSet triples;
    read_tsv(path, [&](const std::vector<std::string>& f, std::size_t line_no) {
        if (f.size() != 3)
            throw LoadError(fmt::format("{}: expected head<TAB>relation<TAB>tail", where(path, line_no)));
        Triple t { EntityId(std::string(trim(f[0]))), RelationId(std::string(trim(f[1]))),
                   EntityId(std::string(trim(f[2]))) };
        if (!kb.has_entity(t.head))
            throw LoadError(fmt::format("{}: unknown entity {}", where(path, line_no), t.head.value));
        if (!kb.has_relation(t.relation))
            throw LoadError(fmt::format("{}: unknown relation {}", where(path, line_no), t.relation.value));
        if (!kb.has_entity(t.tail))
            throw LoadError(fmt::format("{}: unknown entity {}", where(path, line_no), t.tail.value));
        triples.insert(std::move(t));
    });
    return triples;
}

void write_triples(const std::filesystem::path& path, const TripleSet& triples)
{
    std::ofstream out(path);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    for (auto const& t: triples)
        out << t.head.value << '\t' << t.relation.value << '\t' << t.tail.value << '\n';
}

void write_entities(const std::filesystem::path& path, const KnowledgeBase& kb)
{
    std::ofstream out(path);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    for (auto const& [id, e]: kb.entities())
        out << id.value << '\t' << e.label << '\t' << e.description << '\n';
}

void write_relations(const std::filesystem::path& path, const KnowledgeBase& kb)
{
    std::ofstream out(path);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    for (auto const& [id, r]: kb.relations())
        out << id.value << '\t' << r.label << '\t' << r.description << '\t' << r.schema << '\n';
}

SplitBundle split(const KnowledgeBase& kb, std::size_t n_valid, std::size_t n_test, std::uint64_t seed)
{
    auto const& all = kb.triples();
    if (n_valid + n_test >= all.size())
        throw ArgumentError(fmt::format("cannot carve {} valid + {} test triples out of {}", n_valid, n_test,
                                        all.size()));

    std::vector<Triple> order(all.begin(), all.end());
    Rng rng(seed);
    rng.shuffle(std::span<Triple>(order));

    SplitBundle bundle;
    for (std::size_t i = 0; i < order.size(); ++i)
    {
        if (i < n_valid)
            bundle.valid.insert(order[i]);
        else if (i < n_valid + n_test)
            bundle.test.insert(order[i]);
        else
            bundle.train.insert(order[i]);
    }
    return bundle;
}

TripleSet degrade(const TripleSet& train, double keep_fraction, std::uint64_t seed, const KnowledgeBase& kb)
{
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ArgumentError(fmt::format("keep_fraction must be in (0, 1], got {}", keep_fraction));

    auto const n_keep = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(train.size()) + 0.5));
    if (n_keep >= train.size())
        return train;

    std::vector<Triple> order(train.begin(), train.end());
    Rng rng(seed);
    rng.shuffle(std::span<Triple>(order));

    TripleSet kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_keep));

    std::set<EntityId> covered;
    for (auto const& t: kept)
    {
        covered.insert(t.head);
        covered.insert(t.tail);
    }
    RelationId const noop { std::string(noop_relation) };
    if (!kb.has_relation(noop))
        throw StateError("knowledge base lacks the noop relation");
    for (auto const& t: train)
    {
        if (t.relation == noop)
            continue;
        for (auto const* e: { &t.head, &t.tail })
        {
            if (!covered.contains(*e))
            {
                kept.insert(Triple { *e, noop, *e });
                covered.insert(*e);
            }
        }
    }
    return kept;
}

namespace
{

std::vector<Triple> rank_context(const KnowledgeBase& kb, const EntityId& anchor, const RelationId& r,
                                 std::size_t max_size, bool withhold_outgoing)
{
    auto candidates = kb.neighbors(anchor);
    std::erase_if(candidates, [&](const Triple& t) {
        if (t.relation != r)
            return false;
        return withhold_outgoing ? t.head == anchor : t.tail == anchor;
    });

    std::vector<std::pair<std::uint64_t, Triple>> scored;
    scored.reserve(candidates.size());
    for (auto& t: candidates)
        scored.emplace_back(kb.cooccurrence_score(r, t.relation), std::move(t));
    std::stable_sort(scored.begin(), scored.end(), [](auto const& a, auto const& b) { return a.first > b.first; });

    std::vector<Triple> out;
    for (std::size_t i = 0; i < scored.size() && i < max_size; ++i)
        out.push_back(std::move(scored[i].second));
    return out;
}

} // namespace

std::vector<Triple> select_context(const KnowledgeBase& kb, const EntityId& h, const RelationId& r,
                                   std::size_t max_size)
{
    (void)kb.relation(r);
    return rank_context(kb, h, r, max_size, true);
}

std::vector<Triple> select_context_for_head(const KnowledgeBase& kb, const RelationId& r, const EntityId& t,
                                            std::size_t max_size)
{
    (void)kb.relation(r);
    return rank_context(kb, t, r, max_size, false);
}

} // namespace jointkb
