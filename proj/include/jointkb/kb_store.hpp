// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/ids.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace jointkb
{

inline constexpr std::string_view noop_relation = "noop";

using TripleSet = std::set<Triple>;

struct EntityRecord
{
    EntityId id;
    std::string label;
    std::string description;
};

struct RelationRecord
{
    RelationId id;
    std::string label;
    std::string description;
    /// Bracketed type pattern, e.g. "[Location], head of government, [Human]".
    std::string schema;
};

struct SplitBundle
{
    TripleSet train;
    TripleSet valid;
    TripleSet test;
};

/// The triple store: entities, relations, triples, adjacency in both directions and
/// the label catalog used to map surface strings back to identifiers.
///
/// Read-only methods are safe to call concurrently. Mutation (adding symbols or
/// triples) requires exclusive access.
class KnowledgeBase
{
  public:
    KnowledgeBase();

    /// Registers an entity. Re-registering an existing id with identical data is a no-op;
    /// conflicting data throws ArgumentError.
    void add_entity(EntityRecord record);
    void add_relation(RelationRecord record);

    /// Adds a triple; both entities and the relation must already be registered.
    /// Returns false when the triple was already present.
    bool add_triple(const Triple& triple);

    /// Attaches a noop self-loop to every entity with no incident triple.
    /// Returns the number of loops added.
    std::size_t add_noop_loops_for_isolated();

    /// Same symbols, different triple set. Entities left without any incident
    /// triple get a noop self-loop.
    [[nodiscard]] KnowledgeBase with_triples(const TripleSet& triples) const;

    [[nodiscard]] bool has_entity(const EntityId& id) const;
    [[nodiscard]] bool has_relation(const RelationId& id) const;
    [[nodiscard]] const EntityRecord& entity(const EntityId& id) const;
    [[nodiscard]] const RelationRecord& relation(const RelationId& id) const;
    [[nodiscard]] const std::string& label(const EntityId& id) const { return entity(id).label; }
    [[nodiscard]] const std::string& label(const RelationId& id) const { return relation(id).label; }

    [[nodiscard]] const std::map<EntityId, EntityRecord>& entities() const noexcept { return _entities; }
    [[nodiscard]] const std::map<RelationId, RelationRecord>& relations() const noexcept { return _relations; }
    [[nodiscard]] const TripleSet& triples() const noexcept { return _triples; }

    [[nodiscard]] const std::vector<Triple>& out_edges(const EntityId& id) const;
    [[nodiscard]] const std::vector<Triple>& in_edges(const EntityId& id) const;

    /// Entity ids whose label matches `surface` after normalization, in id order.
    [[nodiscard]] std::vector<EntityId> lookup_label(std::string_view surface) const;
    /// Relation ids whose label matches `surface` after normalization.
    [[nodiscard]] std::vector<RelationId> lookup_relation_label(std::string_view surface) const;

    /// Incident triples of `e` in either direction, noop loops excluded, ordered by
    /// (relation id, counterpart id, outgoing before incoming).
    [[nodiscard]] std::vector<Triple> neighbors(const EntityId& e) const;

    /// R_e: the relations of all incident triples, noop excluded.
    [[nodiscard]] std::set<RelationId> relations_of(const EntityId& e) const;

    /// Number of entities e with both r and r_hat in R_e.
    [[nodiscard]] std::uint64_t cooccurrence_score(const RelationId& r, const RelationId& r_hat) const;

  private:
    void bump_cooccurrence(const EntityId& e, const RelationId& r);
    [[nodiscard]] std::size_t relation_slot(const RelationId& r) const;

    std::map<EntityId, EntityRecord> _entities;
    std::map<RelationId, RelationRecord> _relations;
    TripleSet _triples;
    std::unordered_map<EntityId, std::vector<Triple>> _out;
    std::unordered_map<EntityId, std::vector<Triple>> _in;
    std::unordered_map<std::string, std::vector<EntityId>> _catalog;
    std::unordered_map<std::string, std::vector<RelationId>> _relation_catalog;

    // Co-occurrence counts kept incrementally: _incident[e] is R_e, and
    // _cooc[slot(r) * stride + slot(r_hat)] counts entities carrying both.
    std::unordered_map<EntityId, std::set<RelationId>> _incident;
    std::unordered_map<RelationId, std::size_t> _relation_slots;
    std::vector<std::uint64_t> _cooc;
    std::size_t _stride = 0;
};

/// Reads the three tab-separated files. Duplicate triples collapse silently.
KnowledgeBase load_kb(const std::filesystem::path& triples_path,
                      const std::filesystem::path& entities_path,
                      const std::filesystem::path& relations_path);

/// Reads a triples file against an already-loaded symbol table.
TripleSet load_triples(const std::filesystem::path& path, const KnowledgeBase& kb);

void write_triples(const std::filesystem::path& path, const TripleSet& triples);
void write_entities(const std::filesystem::path& path, const KnowledgeBase& kb);
void write_relations(const std::filesystem::path& path, const KnowledgeBase& kb);

/// Random disjoint valid/test samples; the remainder is train.
SplitBundle split(const KnowledgeBase& kb, std::size_t n_valid, std::size_t n_test, std::uint64_t seed);

/// Keeps round-half-up(keep_fraction * |train|) triples chosen uniformly at random.
/// Entities that had incident triples in `train` but none afterwards get a noop loop.
TripleSet degrade(const TripleSet& train, double keep_fraction, std::uint64_t seed, const KnowledgeBase& kb);

/// Context set T for the query (h, r, ?): neighbor triples of h ranked by descending
/// co-occurrence score with r. Outgoing (h, r, x) triples are withheld since they
/// would reveal answers to the query itself.
std::vector<Triple> select_context(const KnowledgeBase& kb, const EntityId& h, const RelationId& r,
                                   std::size_t max_size = 20);

/// Context for the head query (?, r, t): neighbors of t, withholding incoming (x, r, t).
std::vector<Triple> select_context_for_head(const KnowledgeBase& kb, const RelationId& r, const EntityId& t,
                                            std::size_t max_size = 20);

} // namespace jointkb
