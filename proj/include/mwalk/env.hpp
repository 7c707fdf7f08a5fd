#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"

namespace mwalk {

using NodeKey = std::int64_t;

/// One component of an input vector: either a one-hot block of `space` entries
/// with a single 1 at `index`, or row `index` of learned embedding table `space`.
struct FeatureSlot {
    enum class Kind : std::uint8_t { OneHot, Embedding };
    Kind kind;
    std::uint32_t space;
    std::uint32_t index;

    static FeatureSlot one_hot(std::uint32_t width, std::uint32_t hot) { return {Kind::OneHot, width, hot}; }
    static FeatureSlot embedding(std::uint32_t table, std::uint32_t row) { return {Kind::Embedding, table, row}; }
};

using Features = std::vector<FeatureSlot>;

struct EmbeddingSpec {
    std::string name;
    std::size_t rows;
    std::size_t dim;
};

/// Widths of the node, edge and query feature vectors an environment produces, plus
/// the embedding tables those features refer to.
struct FeatureLayout {
    std::vector<EmbeddingSpec> tables;
    std::size_t node_width = 0;
    std::size_t edge_width = 0;
    std::size_t query_width = 0;

    std::size_t width_of(const Features& f) const {
        std::size_t w = 0;
        for (const auto& s : f) w += s.kind == FeatureSlot::Kind::OneHot ? s.space : tables.at(s.space).dim;
        return w;
    }
};

/// An outgoing edge: its type (relation id or action id) and the node it leads to.
template <class Node>
struct Edge {
    int type;
    Node next;
};

/// Deterministic graph-walking environment. Edges are returned in a fixed order;
/// action index j >= 1 of a state refers to edges(...)[j - 1], index 0 is STOP.
template <class E>
concept WalkEnvironment = requires(const E& env, const typename E::Instance& inst, const typename E::Node& node,
                                   int edge_type) {
    { env.start(inst) } -> std::convertible_to<typename E::Node>;
    { env.edges(inst, node) } -> std::convertible_to<std::vector<Edge<typename E::Node>>>;
    { env.reward(inst, node) } -> std::convertible_to<double>;
    { env.node_key(node) } -> std::convertible_to<NodeKey>;
    { env.query_key(inst) } -> std::convertible_to<NodeKey>;
    { env.node_features(inst, node) } -> std::convertible_to<Features>;
    { env.edge_features(edge_type) } -> std::convertible_to<Features>;
    { env.query_features(inst) } -> std::convertible_to<Features>;
    { env.layout() } -> std::convertible_to<const FeatureLayout&>;
    { env.horizon() } -> std::convertible_to<int>;
};

inline constexpr int kStop = 0;

template <class Node>
struct WalkState {
    Node node;
    int t = 0;
    std::vector<int> history;  // chosen action indices
    bool terminal = false;
};

/// Feasible actions at a state: STOP (index 0) followed by the edges.
template <class Node>
struct CandidateSet {
    std::vector<Edge<Node>> edges;
    std::size_t size() const { return edges.size() + 1; }
};

template <WalkEnvironment E>
WalkState<typename E::Node> initial_state(const E& env, const typename E::Instance& inst) {
    return {env.start(inst), 0, {}, false};
}

/// STOP plus every outgoing edge; STOP only once the horizon is reached.
template <WalkEnvironment E>
CandidateSet<typename E::Node> feasible_actions(const E& env, const typename E::Instance& inst,
                                                const WalkState<typename E::Node>& state, int t_max) {
    if (state.terminal) throw ContractError("feasible_actions called on a terminal state");
    CandidateSet<typename E::Node> c;
    if (state.t < t_max) c.edges = env.edges(inst, state.node);
    return c;
}

template <WalkEnvironment E>
WalkState<typename E::Node> env_step(const E&, const WalkState<typename E::Node>& state,
                                     const CandidateSet<typename E::Node>& cands, int action) {
    if (state.terminal) throw ContractError("env_step called on a terminal state");
    if (action < 0 || static_cast<std::size_t>(action) >= cands.size())
        throw ContractError("action index " + std::to_string(action) + " out of range (" +
                            std::to_string(cands.size()) + " candidates)");
    WalkState<typename E::Node> next = state;
    next.history.push_back(action);
    if (action == kStop) {
        next.terminal = true;
    } else {
        next.node = cands.edges[static_cast<std::size_t>(action - 1)].next;
        ++next.t;
    }
    return next;
}

template <WalkEnvironment E>
double terminal_reward(const E& env, const typename E::Instance& inst, const WalkState<typename E::Node>& state) {
    if (!state.terminal) throw ContractError("terminal_reward on a non-terminal state");
    return env.reward(inst, state.node);
}

/// Replays an action history from the start node.
template <WalkEnvironment E>
WalkState<typename E::Node> replay(const E& env, const typename E::Instance& inst, const std::vector<int>& actions,
                                   int t_max) {
    auto s = initial_state(env, inst);
    for (int a : actions) s = env_step(env, s, feasible_actions(env, inst, s, t_max), a);
    return s;
}

}  // namespace mwalk
