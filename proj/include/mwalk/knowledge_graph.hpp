#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mwalk/env.hpp"
#include "mwalk/errors.hpp"

namespace mwalk::kb {

/// String interning with ids assigned densely in first-seen order.
class Vocab {
public:
    int intern(const std::string& name) {
        auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()));
        if (inserted) names_.push_back(name);
        return it->second;
    }
    int id(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw VocabularyError("unknown name: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return ids_.count(name) != 0; }
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> ids_;
};

struct Triple {
    int head;
    int relation;
    int tail;
    auto operator<=>(const Triple&) const = default;
};

struct OutEdge {
    int relation;
    int tail;
    auto operator<=>(const OutEdge&) const = default;
};

/// Entities, relations (raw ids first, then their inverses) and a sorted,
/// duplicate-free adjacency list per entity.
struct KnowledgeGraph {
    Vocab entities;
    Vocab relations;
    std::size_t base_relations = 0;
    std::string inverse_marker = "_inv";
    std::vector<std::vector<OutEdge>> adjacency;

    int inverse_of(int r) const {
        const int base = static_cast<int>(base_relations);
        return r < base ? r + base : r - base;
    }
    std::size_t entity_count() const { return entities.size(); }
    std::size_t relation_count() const { return relations.size(); }
    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& a : adjacency) n += a.size();
        return n;
    }
    const std::vector<OutEdge>& out_edges(int entity) const { return adjacency.at(static_cast<std::size_t>(entity)); }
    bool has_edge(int h, int r, int t) const {
        const auto& a = out_edges(h);
        return std::binary_search(a.begin(), a.end(), OutEdge{r, t});
    }
};

struct KbData {
    KnowledgeGraph graph;
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
    std::size_t train_lines = 0;  // raw training lines, duplicates included
};

namespace detail {

struct RawTriple {
    std::string h, r, t;
};

inline std::vector<RawTriple> read_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open triple file " + path);
    std::vector<RawTriple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (a == std::string::npos || b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
            throw ParseError(path, lineno, "expected head<TAB>relation<TAB>tail");
        RawTriple t{line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)};
        if (t.h.empty() || t.r.empty() || t.t.empty()) throw ParseError(path, lineno, "empty field");
        out.push_back(std::move(t));
    }
    if (out.empty()) throw DataError("empty triple file " + path);
    return out;
}

}  // namespace detail

/// Builds the graph from the training split only, adding an inverse edge for every
/// training triple. Valid/test triples are returned as query lists; their entities
/// join the vocabulary but contribute no edges. Empty paths are skipped.
inline KbData load_triples(const std::string& train_path, const std::string& valid_path = "",
                           const std::string& test_path = "", const std::string& inverse_marker = "_inv") {
    if (inverse_marker.empty()) throw ConfigError("inverse relation marker must not be empty");
    const auto train_raw = detail::read_raw(train_path);
    std::vector<detail::RawTriple> valid_raw, test_raw;
    if (!valid_path.empty()) valid_raw = detail::read_raw(valid_path);
    if (!test_path.empty()) test_raw = detail::read_raw(test_path);

    KbData data;
    auto& g = data.graph;
    g.inverse_marker = inverse_marker;
    const std::vector<detail::RawTriple>* parts[] = {&train_raw, &valid_raw, &test_raw};
    for (const auto* part : parts)
        for (const auto& t : *part) {
            g.entities.intern(t.h);
            g.relations.intern(t.r);
            g.entities.intern(t.t);
        }
    g.base_relations = g.relations.size();
    for (std::size_t r = 0; r < g.base_relations; ++r) {
        const std::string inv = g.relations.name(static_cast<int>(r)) + inverse_marker;
        if (g.relations.contains(inv))
            throw DataError("inverse marker '" + inverse_marker + "' collides with relation name '" + inv + "'");
    }
    for (std::size_t r = 0; r < g.base_relations; ++r)
        g.relations.intern(g.relations.name(static_cast<int>(r)) + inverse_marker);

    auto convert = [&](const std::vector<detail::RawTriple>& raw) {
        std::vector<Triple> out;
        out.reserve(raw.size());
        for (const auto& t : raw) out.push_back({g.entities.id(t.h), g.relations.id(t.r), g.entities.id(t.t)});
        return out;
    };
    data.train = convert(train_raw);
    data.valid = convert(valid_raw);
    data.test = convert(test_raw);
    data.train_lines = train_raw.size();

    g.adjacency.assign(g.entities.size(), {});
    for (const auto& t : data.train) {
        g.adjacency[static_cast<std::size_t>(t.head)].push_back({t.relation, t.tail});
        g.adjacency[static_cast<std::size_t>(t.tail)].push_back({g.inverse_of(t.relation), t.head});
    }
    for (auto& a : g.adjacency) {
        std::sort(a.begin(), a.end());
        a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    return data;
}

/// All known tails per (head, relation) over the given splits; used for filtered ranking.
class TailIndex {
public:
    void add(const std::vector<Triple>& triples) {
        for (const auto& t : triples) tails_[{t.head, t.relation}].insert(t.tail);
    }
    bool contains(int head, int relation, int tail) const {
        auto it = tails_.find({head, relation});
        return it != tails_.end() && it->second.count(tail) != 0;
    }
    const std::set<int>& tails(int head, int relation) const {
        static const std::set<int> empty;
        auto it = tails_.find({head, relation});
        return it == tails_.end() ? empty : it->second;
    }

private:
    std::map<std::pair<int, int>, std::set<int>> tails_;
};

struct KbQuery {
    int source = -1;
    int relation = -1;
    int target = -1;  // -1 when unknown
    /// Hide the (source, relation, target) edge and its inverse from the walk.
    bool mask_query_edge = false;
};

/// Knowledge-graph walking environment. Node features are entity embeddings, edge
/// features relation embeddings, and the query is [entity(source), relation(q)].
class KbcEnvironment {
public:
    using Instance = KbQuery;
    using Node = int;

    KbcEnvironment(const KnowledgeGraph& graph, int horizon, std::size_t entity_dim = 4,
                   std::size_t relation_dim = 64)
        : graph_(&graph), horizon_(horizon) {
        layout_.tables.push_back({"entity", graph.entity_count(), entity_dim});
        layout_.tables.push_back({"relation", graph.relation_count(), relation_dim});
        layout_.node_width = entity_dim;
        layout_.edge_width = relation_dim;
        layout_.query_width = entity_dim + relation_dim;
    }

    const KnowledgeGraph& graph() const { return *graph_; }

    KbQuery make_query(const Triple& t, bool mask) const { return {t.head, t.relation, t.tail, mask}; }

    void validate(const KbQuery& q) const {
        if (q.source < 0 || static_cast<std::size_t>(q.source) >= graph_->entity_count())
            throw VocabularyError("query source entity out of range");
        if (q.relation < 0 || static_cast<std::size_t>(q.relation) >= graph_->relation_count())
            throw VocabularyError("query relation out of range");
    }

    Node start(const Instance& q) const { return q.source; }

    std::vector<Edge<Node>> edges(const Instance& q, const Node& node) const {
        const auto& adj = graph_->out_edges(node);
        std::vector<Edge<Node>> out;
        out.reserve(adj.size());
        const bool mask = q.mask_query_edge && q.target >= 0;
        const int inv = mask ? graph_->inverse_of(q.relation) : -1;
        for (const auto& e : adj) {
            if (mask && ((node == q.source && e.relation == q.relation && e.tail == q.target) ||
                         (node == q.target && e.relation == inv && e.tail == q.source)))
                continue;
            out.push_back({e.relation, e.tail});
        }
        return out;
    }

    double reward(const Instance& q, const Node& node) const { return q.target >= 0 && node == q.target ? 1.0 : 0.0; }
    NodeKey node_key(const Node& node) const { return node; }
    NodeKey query_key(const Instance& q) const { return q.relation; }
    Features node_features(const Instance&, const Node& node) const {
        return {FeatureSlot::embedding(0, static_cast<std::uint32_t>(node))};
    }
    Features edge_features(int relation) const {
        return {FeatureSlot::embedding(1, static_cast<std::uint32_t>(relation))};
    }
    Features query_features(const Instance& q) const {
        return {FeatureSlot::embedding(0, static_cast<std::uint32_t>(q.source)),
                FeatureSlot::embedding(1, static_cast<std::uint32_t>(q.relation))};
    }
    const FeatureLayout& layout() const { return layout_; }
    int horizon() const { return horizon_; }

    std::string describe_node(const Node& n) const { return graph_->entities.name(n); }
    std::string describe_edge(int relation) const { return graph_->relations.name(relation); }

private:
    const KnowledgeGraph* graph_;
    int horizon_;
    FeatureLayout layout_;
};

static_assert(WalkEnvironment<KbcEnvironment>);

}  // namespace mwalk::kb
