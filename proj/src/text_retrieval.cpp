// SPDX-License-Identifier: Apache-2.0
#include "jointkb/text_retrieval.hpp"

#include "jointkb/errors.hpp"
#include "jointkb/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>

namespace jointkb
{

namespace
{

bool is_word_byte(unsigned char c)
{
    return std::isalnum(c) != 0 || c >= 0x80;
}

bool is_upper(unsigned char c)
{
    return c >= 'A' && c <= 'Z';
}

bool is_lower(unsigned char c)
{
    return c >= 'a' && c <= 'z';
}

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty())
            tokens.push_back(std::move(current));
        current.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i)
    {
        auto const c = static_cast<unsigned char>(text[i]);
        if (!is_word_byte(c))
        {
            flush();
            continue;
        }
        if (is_upper(c) && i > 0)
        {
            auto const prev = static_cast<unsigned char>(text[i - 1]);
            bool const next_lower = i + 1 < text.size() && is_lower(static_cast<unsigned char>(text[i + 1]));
            // fooBar -> foo|bar, HTTPServer -> http|server
            if (is_lower(prev) || (is_upper(prev) && next_lower))
                flush();
        }
        current.push_back(static_cast<char>(std::tolower(c)));
    }
    flush();
    return tokens;
}

Bm25Index::Bm25Index(std::vector<Document> docs, double k1, double b): _docs(std::move(docs)), _k1(k1), _b(b)
{
    if (!(k1 > 0.0))
        throw ArgumentError("BM25 k1 must be positive");
    if (b < 0.0 || b > 1.0)
        throw ArgumentError("BM25 b must lie in [0, 1]");

    std::size_t total = 0;
    _lengths.reserve(_docs.size());
    for (std::size_t d = 0; d < _docs.size(); ++d)
    {
        auto tokens = tokenize(_docs[d].text);
        _lengths.push_back(tokens.size());
        total += tokens.size();
        std::sort(tokens.begin(), tokens.end());
        for (std::size_t i = 0; i < tokens.size();)
        {
            std::size_t j = i;
            while (j < tokens.size() && tokens[j] == tokens[i])
                ++j;
            _postings[tokens[i]].push_back(Posting { d, j - i });
            i = j;
        }
    }
    if (!_docs.empty())
        _avgdl = static_cast<double>(total) / static_cast<double>(_docs.size());
}

std::size_t Bm25Index::document_frequency(const std::string& term) const
{
    auto it = _postings.find(term);
    return it == _postings.end() ? 0 : it->second.size();
}

double Bm25Index::idf(const std::string& term) const
{
    auto const n = static_cast<double>(_docs.size());
    auto const df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<ScoredDocument> Bm25Index::top_k(std::string_view query, std::size_t k) const
{
    if (k == 0 || _docs.empty())
        return {};

    std::vector<double> scores(_docs.size(), 0.0);
    std::vector<bool> touched(_docs.size(), false);
    for (auto const& term: tokenize(query))
    {
        auto it = _postings.find(term);
        if (it == _postings.end())
            continue;
        auto const term_idf = idf(term);
        for (auto const& p: it->second)
        {
            auto const tf = static_cast<double>(p.tf);
            // avgdl > 0 here: a posting implies at least one token in the corpus.
            auto const norm = _k1 * (1.0 - _b + _b * static_cast<double>(_lengths[p.doc]) / _avgdl);
            scores[p.doc] += term_idf * tf * (_k1 + 1.0) / (tf + norm);
            touched[p.doc] = true;
        }
    }

    std::vector<ScoredDocument> hits;
    for (std::size_t d = 0; d < _docs.size(); ++d)
        if (touched[d] && scores[d] > 0.0)
            hits.push_back(ScoredDocument { _docs[d].doc_id, scores[d] });

    auto const better = [](const ScoredDocument& a, const ScoredDocument& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.doc_id < b.doc_id;
    };
    if (hits.size() > k)
    {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
        hits.resize(k);
    }
    else
    {
        std::sort(hits.begin(), hits.end(), better);
    }
    return hits;
}

namespace
{

std::vector<Document> relation_documents(const KnowledgeBase& kb)
{
    std::vector<Document> docs;
    for (auto const& [id, rel]: kb.relations())
    {
        if (id.value == noop_relation)
            continue;
        docs.push_back(Document { id.value, rel.label + " " + rel.description });
    }
    return docs;
}

} // namespace

RelationLinker::RelationLinker(const KnowledgeBase& kb): _kb(&kb), _index(relation_documents(kb)) {}

RelationId RelationLinker::link(std::string_view surface) const
{
    for (auto const& id: _kb->lookup_relation_label(surface))
        if (id.value != noop_relation)
            return id;

    auto hits = _index.top_k(surface, 1);
    if (hits.empty())
        throw LinkError(fmt::format("no relation matches '{}'", surface));
    return RelationId(hits.front().doc_id);
}

RelationId link_relation(const KnowledgeBase& kb, std::string_view surface)
{
    return RelationLinker(kb).link(surface);
}

std::vector<SurfaceTriple> retrieve_related_triples(const std::vector<SurfaceTriple>& observations,
                                                    std::string_view sub_question, std::size_t k)
{
    std::vector<Document> docs;
    docs.reserve(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i)
    {
        auto const& t = observations[i];
        // Zero-padded ids keep the doc_id tie-break equal to observation order.
        docs.push_back(Document { fmt::format("{:08d}", i), t.head + " " + t.relation + " " + t.tail });
    }
    Bm25Index index(std::move(docs));

    std::vector<SurfaceTriple> out;
    for (auto const& hit: index.top_k(sub_question, k))
        out.push_back(observations[std::stoul(hit.doc_id)]);
    return out;
}

} // namespace jointkb
