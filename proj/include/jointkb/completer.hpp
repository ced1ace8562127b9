// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/http_json.hpp"
#include "jointkb/kb_store.hpp"
#include "jointkb/rng.hpp"

#include <chrono>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace jointkb
{

enum class QueryMode
{
    tail,
    head,
    relation,
};

/// One of <h, r, ?>, <?, r, t> or <h, ?, t>.
struct CompletionQuery
{
    QueryMode mode = QueryMode::tail;
    std::optional<EntityId> head;
    std::optional<RelationId> relation;
    std::optional<EntityId> tail;

    static CompletionQuery for_tail(EntityId h, RelationId r);
    static CompletionQuery for_head(RelationId r, EntityId t);
    static CompletionQuery for_relation(EntityId h, EntityId t);

    /// Throws ArgumentError unless exactly the slot named by `mode` is absent.
    void validate() const;
};

struct InputSequence
{
    std::string text;
};

/// Renders directive, description and context lines:
///
///   predict tail: <head label> | <relation label>
///   entity description: <head label> [<description>]
///   related relationship: <relation label>
///   context: < h | r | t > <SEP> < h | r | t > ...
InputSequence build_input_sequence(const KnowledgeBase& kb, const CompletionQuery& query, std::size_t max_context = 20);

inline constexpr double minus_infinity = -std::numeric_limits<double>::infinity();

struct RankedPrediction
{
    EntityId entity;
    double score = minus_infinity;
};

struct RankedRelation
{
    RelationId relation;
    double score = minus_infinity;
};

/// Pool of the original training triples, sampled uniformly without replacement
/// within each draw.
class ReplayMemory
{
  public:
    ReplayMemory(std::vector<Triple> pool, std::uint64_t seed);
    ReplayMemory(const TripleSet& pool, std::uint64_t seed);

    [[nodiscard]] std::vector<Triple> sample(std::size_t n);
    [[nodiscard]] const std::vector<Triple>& pool() const noexcept { return _pool; }

  private:
    std::vector<Triple> _pool;
    Rng _rng;
};

enum class OptimizerKind
{
    sgd,
    adam,
};

struct TrainingConfig
{
    std::size_t dim = 64;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    /// Passes over (path triples + replay sample) per incremental fine-tuning call.
    std::size_t finetune_passes = 1;
};

struct TrainingReport
{
    std::vector<double> epoch_losses;
};

struct FinetuneReport
{
    std::size_t path_triples = 0;
    std::size_t replay_triples = 0;
    std::size_t new_entities = 0;
    std::size_t new_relations = 0;
    double mean_loss = 0.0;
};

/// The trainable knowledge-base completion model behind the agent's Complete action.
///
/// predict() and score_triple() may run concurrently with each other; pretrain()
/// and incremental_finetune() need exclusive access.
class CompleterModel
{
  public:
    virtual ~CompleterModel() = default;

    virtual TrainingReport pretrain(const TripleSet& train, const KnowledgeBase& kb, const TrainingConfig& config) = 0;

    /// Entity candidates for a tail or head query, best first, ties by entity id.
    /// Only entities present in the KB catalog are ever returned.
    [[nodiscard]] virtual std::vector<RankedPrediction> predict(const CompletionQuery& query, const KnowledgeBase& kb,
                                                                std::size_t k) const = 0;

    [[nodiscard]] virtual std::vector<RankedRelation> predict_relation(const CompletionQuery& query,
                                                                       const KnowledgeBase& kb,
                                                                       std::size_t k) const = 0;

    [[nodiscard]] virtual double score_triple(const Triple& triple, const KnowledgeBase& kb) const = 0;

    /// One round of experience replay: `path` plus samples_per_triple * |path|
    /// triples drawn from `memory`. An empty path leaves the model untouched.
    virtual FinetuneReport incremental_finetune(std::span<const Triple> path, ReplayMemory& memory,
                                                std::size_t samples_per_triple, const KnowledgeBase& kb,
                                                const TrainingConfig& config) = 0;
};

/// In-process bilinear (diagonal) model: score(h, r, t) = sum_i e_h[i] * w_r[i] * e_t[i],
/// trained with softmax cross-entropy over all entities.
class NativeCompleter final: public CompleterModel
{
  public:
    NativeCompleter() = default;

    TrainingReport pretrain(const TripleSet& train, const KnowledgeBase& kb, const TrainingConfig& config) override;

    [[nodiscard]] std::vector<RankedPrediction> predict(const CompletionQuery& query, const KnowledgeBase& kb,
                                                        std::size_t k) const override;
    [[nodiscard]] std::vector<RankedRelation> predict_relation(const CompletionQuery& query, const KnowledgeBase& kb,
                                                               std::size_t k) const override;
    [[nodiscard]] double score_triple(const Triple& triple, const KnowledgeBase& kb) const override;

    FinetuneReport incremental_finetune(std::span<const Triple> path, ReplayMemory& memory,
                                        std::size_t samples_per_triple, const KnowledgeBase& kb,
                                        const TrainingConfig& config) override;

    /// Runs one optimizer step on `batch` and returns its mean loss.
    double train_batch(std::span<const Triple> batch, const TrainingConfig& config);

    [[nodiscard]] bool trained() const noexcept { return _trained; }
    [[nodiscard]] std::size_t dim() const noexcept { return _dim; }
    [[nodiscard]] std::size_t entity_count() const noexcept { return _entity_ids.size(); }
    [[nodiscard]] std::size_t relation_count() const noexcept { return _relation_ids.size(); }
    [[nodiscard]] std::span<const double> entity_embedding(const EntityId& e) const;
    [[nodiscard]] std::span<const double> relation_embedding(const RelationId& r) const;
    [[nodiscard]] bool knows(const EntityId& e) const { return _entity_rows.contains(e); }

    void save(const std::filesystem::path& path) const;
    static NativeCompleter load(const std::filesystem::path& path);

    /// Same symbols, parameters and optimizer state.
    friend bool operator==(const NativeCompleter& a, const NativeCompleter& b);

  private:
    struct Parameters
    {
        std::vector<double> values;
        std::vector<double> first_moment;
        std::vector<double> second_moment;

        friend bool operator==(const Parameters&, const Parameters&) = default;
    };

    std::size_t register_entity(const EntityId& e, Rng& rng);
    std::size_t register_relation(const RelationId& r, Rng& rng);
    void append_row(Parameters& params, Rng& rng);
    void apply_update(Parameters& params, const std::vector<double>& grad, const TrainingConfig& config);

    [[nodiscard]] std::size_t entity_row(const EntityId& e) const;
    [[nodiscard]] std::size_t relation_row(const RelationId& r) const;
    [[nodiscard]] std::vector<double> entity_scores(std::span<const double> query) const;
    void require_trained() const;

    std::size_t _dim = 0;
    bool _trained = false;
    std::uint64_t _step = 0;
    std::uint64_t _init_seed = 0;
    std::uint64_t _registrations = 0;
    std::vector<EntityId> _entity_ids;
    std::vector<RelationId> _relation_ids;
    std::unordered_map<EntityId, std::size_t> _entity_rows;
    std::unordered_map<RelationId, std::size_t> _relation_rows;
    Parameters _entities;
    Parameters _relations;
};

struct RemoteCompleterConfig
{
    std::string endpoint;
    std::size_t num_samples = 500;
    double temperature = 1.0;
    std::size_t max_context = 20;
    std::chrono::milliseconds timeout { 60'000 };
};

/// Client for an out-of-process sequence-to-sequence completer. The server samples
/// decoded sequences for an input sequence; decodes that do not name a KB entity are
/// discarded and every entity never decoded scores minus infinity.
///
/// Wire contract (JSON over HTTP POST, paths relative to the endpoint):
///   /generate  {"sequence", "num_samples", "temperature"} -> {"samples": [{"text", "logprob"}]}
///   /score     {"sequence", "target"}                     -> {"logprob"}
///   /pretrain  {"triples": [[h, r, t]]}                   -> {}
///   /finetune  {"triples": [[h, r, t]], "replay": [...]}  -> {}
/// Triples travel as surface labels.
class RemoteCompleter final: public CompleterModel
{
  public:
    explicit RemoteCompleter(RemoteCompleterConfig config);

    TrainingReport pretrain(const TripleSet& train, const KnowledgeBase& kb, const TrainingConfig& config) override;

    [[nodiscard]] std::vector<RankedPrediction> predict(const CompletionQuery& query, const KnowledgeBase& kb,
                                                        std::size_t k) const override;
    [[nodiscard]] std::vector<RankedRelation> predict_relation(const CompletionQuery& query, const KnowledgeBase& kb,
                                                               std::size_t k) const override;
    [[nodiscard]] double score_triple(const Triple& triple, const KnowledgeBase& kb) const override;

    FinetuneReport incremental_finetune(std::span<const Triple> path, ReplayMemory& memory,
                                        std::size_t samples_per_triple, const KnowledgeBase& kb,
                                        const TrainingConfig& config) override;

    [[nodiscard]] const RemoteCompleterConfig& config() const noexcept { return _config; }

  private:
    struct Sample
    {
        std::string text;
        double logprob;
    };

    [[nodiscard]] std::vector<Sample> generate(const InputSequence& sequence) const;

    RemoteCompleterConfig _config;
    EndpointAddress _address;
};

} // namespace jointkb
