// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jointkb/kb_store.hpp"

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace jointkb
{

/// Lowercase word pieces: splits on whitespace and punctuation, and on camelCase
/// boundaries. Bytes >= 0x80 are kept as word characters so UTF-8 text survives.
std::vector<std::string> tokenize(std::string_view text);

struct Document
{
    std::string doc_id;
    std::string text;
};

struct ScoredDocument
{
    std::string doc_id;
    double score = 0.0;
};

/// Okapi BM25 over an immutable corpus.
///
///   idf(q)      = ln((N - df(q) + 0.5) / (df(q) + 0.5) + 1)
///   score(D, Q) = sum over query tokens q of
///                 idf(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
///
/// Repeated query tokens contribute once per occurrence.
class Bm25Index
{
  public:
    explicit Bm25Index(std::vector<Document> docs, double k1 = 1.2, double b = 0.75);

    /// Positive-score documents in descending score order, ties by doc_id ascending.
    [[nodiscard]] std::vector<ScoredDocument> top_k(std::string_view query, std::size_t k) const;

    [[nodiscard]] std::size_t size() const noexcept { return _docs.size(); }
    [[nodiscard]] double average_document_length() const noexcept { return _avgdl; }
    [[nodiscard]] std::size_t document_frequency(const std::string& term) const;
    [[nodiscard]] double idf(const std::string& term) const;
    [[nodiscard]] double k1() const noexcept { return _k1; }
    [[nodiscard]] double b() const noexcept { return _b; }

  private:
    struct Posting
    {
        std::size_t doc;
        std::size_t tf;
    };

    std::vector<Document> _docs;
    std::vector<std::size_t> _lengths;
    std::unordered_map<std::string, std::vector<Posting>> _postings;
    double _avgdl = 0.0;
    double _k1;
    double _b;
};

/// Maps free-text relation names onto KB relations. An exact (normalized) label match
/// wins outright; otherwise the best BM25 hit over "label description" documents.
class RelationLinker
{
  public:
    explicit RelationLinker(const KnowledgeBase& kb);

    /// Throws LinkError when nothing matches.
    [[nodiscard]] RelationId link(std::string_view surface) const;

  private:
    const KnowledgeBase* _kb;
    Bm25Index _index;
};

RelationId link_relation(const KnowledgeBase& kb, std::string_view surface);

/// A triple rendered with surface labels, as it appears in agent observations.
struct SurfaceTriple
{
    std::string head;
    std::string relation;
    std::string tail;

    [[nodiscard]] std::string render() const { return head + ", " + relation + ", " + tail; }

    friend auto operator<=>(const SurfaceTriple&, const SurfaceTriple&) = default;
    friend bool operator==(const SurfaceTriple&, const SurfaceTriple&) = default;
};

/// BM25-ranks observation triples ("head relation tail") against a sub-question.
std::vector<SurfaceTriple> retrieve_related_triples(const std::vector<SurfaceTriple>& observations,
                                                    std::string_view sub_question, std::size_t k);

} // namespace jointkb
