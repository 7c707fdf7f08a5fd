#pragma once

// Prediction from a trained walker: MCTS node scoring, beam search over pi, and
// ranking metrics (HITS@K, MRR, MAP).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mwalk/mcts.hpp"
#include "mwalk/walker_model.hpp"

namespace mwalk {

template <class Node>
struct RankedPrediction {
    Node node{};
    NodeKey key = 0;
    double score = 0;
    std::vector<int> path;  // actions of the best path reaching the node, ending in STOP
};

namespace detail {

template <class Node>
void sort_predictions(std::vector<RankedPrediction<Node>>& preds) {
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
    });
}

}  // namespace detail

/// Score(n) = sum over tree leaves s_T that end at n of N(s_T, STOP) / N_total *
/// Q(s_T, STOP), where N_total is the summed STOP visit count over all leaves.
/// Sorted by score (descending), ties by node key.
template <WalkEnvironment E>
std::vector<RankedPrediction<typename E::Node>> score_nodes(const SearchTree<typename E::Node>& tree, const E& env,
                                                            const typename E::Instance& inst) {
    using Node = typename E::Node;
    double total = 0;
    for (const auto& [key, e] : tree.entries()) total += e.N.empty() ? 0.0 : e.N[kStop];
    std::unordered_map<NodeKey, RankedPrediction<Node>> by_node;
    std::unordered_map<NodeKey, double> best_leaf;
    if (total <= 0) return {};
    for (const auto& [key, e] : tree.entries()) {
        if (e.N.empty() || e.N[kStop] <= 0) continue;
        const NodeKey nk = env.node_key(e.node);
        auto [it, inserted] = by_node.try_emplace(nk);
        auto& p = it->second;
        if (inserted) {
            p.node = e.node;
            p.key = nk;
        }
        const double contrib = e.N[kStop] / total * e.stop_value;
        p.score += contrib;
        auto& best = best_leaf[nk];
        if (inserted || contrib > best) {
            best = contrib;
            p.path.clear();
            for (std::size_t i = 2; i < key.size(); i += 2) p.path.push_back(static_cast<int>(key[i]));
            p.path.push_back(kStop);
        }
    }
    std::vector<RankedPrediction<Node>> out;
    out.reserve(by_node.size());
    for (auto& [k, p] : by_node) out.push_back(std::move(p));
    detail::sort_predictions(out);
    (void)inst;
    return out;
}

/// Searches with `cfg.num_simulations` rollouts and returns the scored nodes.
template <WalkEnvironment E>
std::vector<RankedPrediction<typename E::Node>> mcts_predict(const WalkerModel<float>& model, const E& env,
                                                             const typename E::Instance& inst, const MctsConfig& cfg,
                                                             Tape<float>& tape) {
    tape.set_recording(false);
    const auto search = run_search(env, inst, model, cfg, tape);
    return score_nodes(search.tree, env, inst);
}

/// Beam search over pi: at each step every live path expands into all feasible
/// actions, paths that chose STOP are finished, and the `width` best live paths by
/// cumulative log pi survive. Nodes are ranked by the probability of their best
/// finished path.
template <WalkEnvironment E>
std::vector<RankedPrediction<typename E::Node>> beam_decode(const WalkerModel<float>& model, const E& env,
                                                            const typename E::Instance& inst, int width, int t_max,
                                                            Tape<float>& tape) {
    using Node = typename E::Node;
    if (width < 1) throw ParameterError("beam width must be at least 1");
    struct Beam {
        std::vector<int> actions;
        double logp = 0;
    };
    struct Finished {
        Node node;
        NodeKey key;
        double logp;
        std::vector<int> actions;
    };
    tape.set_recording(false);
    std::vector<Beam> live{Beam{}};
    std::vector<Finished> finished;
    for (int depth = 0; depth <= t_max && !live.empty(); ++depth) {
        std::vector<Beam> next;
        for (const auto& b : live) {
            tape.clear();
            PathEncoder<float, E> walk(tape, model, env, inst, t_max);
            for (int a : b.actions) walk.advance(a);
            const auto& u = walk.scores();
            const auto pi = softmax_tau(std::vector<double>(u.begin(), u.end()), model.config().tau);
            for (std::size_t a = 0; a < pi.size(); ++a) {
                Beam nb{b.actions, b.logp + std::log(pi[a])};
                nb.actions.push_back(static_cast<int>(a));
                if (a == kStop) {
                    const Node& n = walk.state().node;
                    finished.push_back({n, env.node_key(n), nb.logp, std::move(nb.actions)});
                } else {
                    next.push_back(std::move(nb));
                }
            }
        }
        std::stable_sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) { return a.logp > b.logp; });
        if (next.size() > static_cast<std::size_t>(width)) next.resize(static_cast<std::size_t>(width));
        live = std::move(next);
    }
    std::unordered_map<NodeKey, RankedPrediction<Node>> best;
    for (auto& f : finished) {
        auto it = best.find(f.key);
        if (it == best.end() || f.logp > it->second.score)
            best[f.key] = RankedPrediction<Node>{f.node, f.key, f.logp, f.actions};
    }
    std::vector<RankedPrediction<Node>> out;
    for (auto& [k, p] : best) out.push_back(std::move(p));
    detail::sort_predictions(out);
    return out;
}

// ---------------------------------------------------------------- metrics

/// Ranks are 1-based; 0 means the answer was not among the predictions.
inline double hits_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) return 0.0;
    std::size_t hits = 0;
    for (int r : ranks) hits += r >= 1 && r <= k;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

inline double mrr(const std::vector<int>& ranks) {
    if (ranks.empty()) return 0.0;
    double s = 0;
    for (int r : ranks) s += r >= 1 ? 1.0 / r : 0.0;
    return s / static_cast<double>(ranks.size());
}

/// Average precision of one ranked list against a set of relevant items; relevant
/// items absent from the list contribute zero precision.
inline double average_precision(const std::vector<NodeKey>& ranked, const std::set<NodeKey>& relevant) {
    if (relevant.empty()) return 0.0;
    std::size_t found = 0;
    double sum = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (relevant.count(ranked[i])) {
            ++found;
            sum += static_cast<double>(found) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(relevant.size());
}

inline double map_score(const std::vector<std::pair<std::vector<NodeKey>, std::set<NodeKey>>>& lists) {
    if (lists.empty()) return 0.0;
    double s = 0;
    for (const auto& [ranked, rel] : lists) s += average_precision(ranked, rel);
    return s / static_cast<double>(lists.size());
}

/// 1-based rank of `target` in `ranked` after removing every key in `filter` other
/// than the target itself; 0 when absent.
inline int filtered_rank(const std::vector<NodeKey>& ranked, NodeKey target, const std::set<NodeKey>& filter = {}) {
    int rank = 0;
    for (NodeKey k : ranked) {
        if (k == target) return rank + 1;
        if (!filter.count(k)) ++rank;
    }
    return 0;
}

template <class Node>
std::vector<NodeKey> prediction_keys(const std::vector<RankedPrediction<Node>>& preds) {
    std::vector<NodeKey> keys;
    keys.reserve(preds.size());
    for (const auto& p : preds) keys.push_back(p.key);
    return keys;
}

/// Renders a path as "n0 -rel-> n1 -rel-> n2".
template <WalkEnvironment E>
std::string render_path(const E& env, const typename E::Instance& inst, const std::vector<int>& actions, int t_max) {
    auto state = initial_state(env, inst);
    std::string out = env.describe_node(state.node);
    for (int a : actions) {
        if (a == kStop) break;
        const auto cands = feasible_actions(env, inst, state, t_max);
        const auto& e = cands.edges.at(static_cast<std::size_t>(a - 1));
        state = env_step(env, state, cands, a);
        out += " -" + env.describe_edge(e.type) + "-> " + env.describe_node(state.node);
    }
    return out;
}

/// Tree expansions performed by the time the first simulation ending at a
/// rewarded node finished; the total expansion count if none did.
template <WalkEnvironment E>
std::size_t search_effort(const SearchResult<typename E::Node>& search, const E& env,
                          const typename E::Instance& inst) {
    for (const auto& rec : search.records) {
        const auto* leaf = search.tree.find(rec.terminal_key);
        if (leaf && env.reward(inst, leaf->node) > 0) return rec.expansions_after;
    }
    return search.tree.expansions();
}

}  // namespace mwalk
