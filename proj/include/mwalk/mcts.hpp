#pragma once

// PUCT tree search over a deterministic walking environment. Tree statistics live
// in a dictionary keyed by the full path string (q, n_0, i_0, n_1, i_1, ..., n_t),
// so two different paths to the same node never share statistics.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mwalk/env.hpp"
#include "mwalk/walker_model.hpp"

namespace mwalk {

struct MctsConfig {
    int num_simulations = 32;  // E
    double c = 0.5;
    double beta = 0.2;
    double gamma = 0.99;
    int t_max = 12;
    /// At a state with no visits the exploration factor sqrt(sum N) is 0 and every
    /// score ties. When set, the factor is taken as 1 there so the first descent
    /// through fresh states follows argmax pi; otherwise the tie resolves to STOP.
    bool unvisited_follows_prior = false;
};

using PathKey = std::vector<NodeKey>;

struct PathKeyHash {
    std::size_t operator()(const PathKey& k) const noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (NodeKey x : k) {
            h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            h *= 0x100000001b3ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

/// Statistics and cached network outputs of one tree state.
template <class Node>
struct TreeEntry {
    Node node{};
    int t = 0;
    CandidateSet<Node> cands;
    std::vector<double> N;      // discounted visit count per action
    std::vector<double> W;      // total action value per action
    std::vector<double> prior;  // pi(.|s), cached at expansion
    double stop_value = 0;      // Q(s, STOP)
    // encodings needed to expand children
    std::vector<float> q;
    std::vector<float> hA;
    std::vector<std::vector<float>> hcand;

    double total_visits() const {
        double s = 0;
        for (double n : N) s += n;
        return s;
    }
};

template <class Node>
class SearchTree {
public:
    TreeEntry<Node>* find(const PathKey& key) {
        auto it = table_.find(key);
        return it == table_.end() ? nullptr : &it->second;
    }
    const TreeEntry<Node>* find(const PathKey& key) const {
        auto it = table_.find(key);
        return it == table_.end() ? nullptr : &it->second;
    }
    TreeEntry<Node>& insert(PathKey key, TreeEntry<Node> entry) {
        ++expansions_;
        return table_.emplace(std::move(key), std::move(entry)).first->second;
    }
    std::size_t size() const { return table_.size(); }
    std::size_t expansions() const { return expansions_; }
    const auto& entries() const { return table_; }

private:
    std::unordered_map<PathKey, TreeEntry<Node>, PathKeyHash> table_;
    std::size_t expansions_ = 0;
};

struct SimulationStep {
    PathKey key;
    int action;
    int candidate_count;
};

struct SimulationRecord {
    std::vector<SimulationStep> steps;  // last action is STOP
    PathKey terminal_key;
    double value = 0;        // V(s_T) = Q(s_T, STOP)
    NodeKey final_node = 0;
    int length = 0;          // T: number of edges walked
    std::size_t expansions_after = 0;  // tree size once this simulation finished

    std::vector<int> actions() const {
        std::vector<int> a;
        a.reserve(steps.size());
        for (const auto& s : steps) a.push_back(s.action);
        return a;
    }
};

/// argmax_a c * pi(a)^beta * sqrt(sum N) / (1 + N(a)) + W(a) / N(a), with W/N := 0
/// for unvisited actions and ties resolved towards the lowest index. With
/// `prior_when_unvisited`, sqrt(sum N) is replaced by 1 when sum N = 0.
inline int puct_select(std::span<const double> N, std::span<const double> W, std::span<const double> prior, double c,
                       double beta, bool prior_when_unvisited = false) {
    if (N.empty()) throw ContractError("puct_select over an empty candidate set");
    double total = 0;
    for (double n : N) total += n;
    const double root = total == 0 && prior_when_unvisited ? 1.0 : std::sqrt(total);
    int best = 0;
    double best_score = -INFINITY;
    for (std::size_t a = 0; a < N.size(); ++a) {
        const double explore = c * std::pow(prior[a], beta) * root / (1.0 + N[a]);
        const double exploit = N[a] > 0 ? W[a] / N[a] : 0.0;
        const double s = explore + exploit;
        if (s > best_score) {
            best_score = s;
            best = static_cast<int>(a);
        }
    }
    return best;
}

/// N += gamma^(T-t), W += gamma^(T-t) * V for every (s_t, a_t) on the path, where
/// step t = T is the terminal STOP.
template <class Node>
void backup(SearchTree<Node>& tree, const SimulationRecord& rec, double gamma) {
    const int T = static_cast<int>(rec.steps.size()) - 1;
    for (int t = 0; t <= T; ++t) {
        const auto& step = rec.steps[static_cast<std::size_t>(t)];
        auto* e = tree.find(step.key);
        if (!e) throw ContractError("backup: path key not in tree");
        const double w = std::pow(gamma, T - t);
        e->N[static_cast<std::size_t>(step.action)] += w;
        e->W[static_cast<std::size_t>(step.action)] += w * rec.value;
    }
}

namespace detail {

template <WalkEnvironment E>
void fill_entry(TreeEntry<typename E::Node>& entry, Tape<float>& tape, const WalkerModel<float>& model, const E& env,
                const typename E::Instance& inst, Var q) {
    const auto s = encode_state(tape, model, env, inst, q, entry.cands);
    const auto scores = action_scores(tape.value(s.u), model.config().tau);
    const std::size_t k = entry.cands.size();
    entry.N.assign(k, 0.0);
    entry.W.assign(k, 0.0);
    entry.prior = scores.pi;
    entry.stop_value = scores.Q[0];
    entry.q = tape.value(s.q);
    entry.hA = tape.value(s.hA);
    entry.hcand.clear();
    for (Var h : s.hcand) entry.hcand.push_back(tape.value(h));
}

}  // namespace detail

/// Encodes the root state of a query.
template <WalkEnvironment E>
TreeEntry<typename E::Node> expand_root(Tape<float>& tape, const WalkerModel<float>& model, const E& env,
                                        const typename E::Instance& inst, int t_max) {
    tape.clear();
    TreeEntry<typename E::Node> e;
    const auto state = initial_state(env, inst);
    e.node = state.node;
    e.t = 0;
    e.cands = feasible_actions(env, inst, state, t_max);
    detail::fill_entry(e, tape, model, env, inst, initial_history(tape, model, env, inst));
    return e;
}

/// Encodes the state reached from `parent` by edge action `action`.
template <WalkEnvironment E>
TreeEntry<typename E::Node> expand_child(Tape<float>& tape, const WalkerModel<float>& model, const E& env,
                                         const typename E::Instance& inst, const TreeEntry<typename E::Node>& parent,
                                         int action, int t_max) {
    tape.clear();
    TreeEntry<typename E::Node> e;
    e.node = parent.cands.edges[static_cast<std::size_t>(action - 1)].next;
    e.t = parent.t + 1;
    WalkState<typename E::Node> state{e.node, e.t, {}, false};
    e.cands = feasible_actions(env, inst, state, t_max);
    Var q = model.update_history(tape, tape.constant(parent.q), tape.constant(parent.hA),
                                 tape.constant(parent.hcand[static_cast<std::size_t>(action - 1)]),
                                 model.features(tape, env.node_features(inst, e.node)));
    detail::fill_entry(e, tape, model, env, inst, q);
    return e;
}

template <WalkEnvironment E>
PathKey root_key(const E& env, const typename E::Instance& inst) {
    return {env.query_key(inst), env.node_key(env.start(inst))};
}

/// One simulation: PUCT descent from the root until STOP (or the forced STOP at the
/// horizon), evaluation with V(s_T) = Q(s_T, STOP), then backup.
template <WalkEnvironment E>
SimulationRecord simulate(SearchTree<typename E::Node>& tree, const E& env, const typename E::Instance& inst,
                          const WalkerModel<float>& model, const MctsConfig& cfg, Tape<float>& tape) {
    SimulationRecord rec;
    PathKey key = root_key(env, inst);
    TreeEntry<typename E::Node>* entry = tree.find(key);
    if (!entry) entry = &tree.insert(key, expand_root(tape, model, env, inst, cfg.t_max));
    for (;;) {
        const int a = puct_select(entry->N, entry->W, entry->prior, cfg.c, cfg.beta, cfg.unvisited_follows_prior);
        rec.steps.push_back({key, a, static_cast<int>(entry->cands.size())});
        if (a == kStop) {
            rec.terminal_key = key;
            rec.value = entry->stop_value;
            rec.final_node = env.node_key(entry->node);
            rec.length = entry->t;
            break;
        }
        const auto& child_node = entry->cands.edges[static_cast<std::size_t>(a - 1)].next;
        key.push_back(a);
        key.push_back(env.node_key(child_node));
        TreeEntry<typename E::Node>* child = tree.find(key);
        if (!child) child = &tree.insert(key, expand_child(tape, model, env, inst, *entry, a, cfg.t_max));
        entry = child;
    }
    backup(tree, rec, cfg.gamma);
    rec.expansions_after = tree.expansions();
    return rec;
}

template <class Node>
struct SearchResult {
    SearchTree<Node> tree;
    std::vector<SimulationRecord> records;
};

template <WalkEnvironment E>
SearchResult<typename E::Node> run_search(const E& env, const typename E::Instance& inst,
                                          const WalkerModel<float>& model, const MctsConfig& cfg, Tape<float>& tape) {
    if (cfg.num_simulations < 1) throw ParameterError("run_search needs at least one simulation");
    SearchResult<typename E::Node> out;
    out.records.reserve(static_cast<std::size_t>(cfg.num_simulations));
    for (int e = 0; e < cfg.num_simulations; ++e) out.records.push_back(simulate(out.tree, env, inst, model, cfg, tape));
    return out;
}

template <WalkEnvironment E>
SearchResult<typename E::Node> run_search(const E& env, const typename E::Instance& inst,
                                          const WalkerModel<float>& model, const MctsConfig& cfg) {
    Tape<float> tape(false);
    return run_search(env, inst, model, cfg, tape);
}

/// Follows the most visited action from the root (lowest index on ties) until STOP
/// is the most visited choice or the path leaves the tree. Returns the action list.
template <WalkEnvironment E>
std::vector<int> most_visited_path(const SearchTree<typename E::Node>& tree, const E& env,
                                   const typename E::Instance& inst) {
    std::vector<int> actions;
    PathKey key = root_key(env, inst);
    const auto* e = tree.find(key);
    while (e) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < e->N.size(); ++a)
            if (e->N[a] > e->N[best]) best = a;
        actions.push_back(static_cast<int>(best));
        if (best == kStop) break;
        key.push_back(static_cast<NodeKey>(best));
        key.push_back(env.node_key(e->cands.edges[best - 1].next));
        e = tree.find(key);
    }
    if (actions.empty() || actions.back() != kStop) actions.push_back(kStop);
    return actions;
}

}  // namespace mwalk
