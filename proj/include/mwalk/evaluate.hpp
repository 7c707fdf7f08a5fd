#pragma once

// Test-set evaluation for both environments: decode every query with MCTS or beam
// search, rank the predicted nodes and aggregate accuracy / HITS@K / MRR.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"
#include "mwalk/inference.hpp"
#include "mwalk/knowledge_graph.hpp"
#include "mwalk/parallel.hpp"
#include "mwalk/puzzle.hpp"

namespace mwalk {

enum class Decoder { Mcts, Beam };

inline const char* to_string(Decoder d) { return d == Decoder::Mcts ? "mcts" : "beam"; }

inline Decoder parse_decoder(const std::string& s) {
    if (s == "mcts") return Decoder::Mcts;
    if (s == "beam") return Decoder::Beam;
    throw ConfigError("unknown decoder: " + s);
}

struct EvalConfig {
    Decoder decoder = Decoder::Mcts;
    int simulations = 32;
    int beam_size = 32;
    bool filtered = true;
    std::size_t max_queries = 0;  // 0 = all
};

struct QueryResult {
    std::size_t index = 0;
    int rank = 0;                // 1-based rank of the first correct node, 0 if absent
    std::size_t candidates = 0;  // distinct predicted nodes
    std::size_t effort = 0;      // tree expansions until the first rewarded simulation (MCTS only)
    double top_score = 0;
    std::string prediction;      // top-ranked node
    std::string path;            // rendered path to the top-ranked node
};

struct EvalReport {
    std::map<std::string, double> metrics;
    std::vector<QueryResult> queries;
};

namespace detail {

template <WalkEnvironment E>
struct Decoded {
    std::vector<RankedPrediction<typename E::Node>> preds;
    std::vector<int> path;
    std::size_t effort = 0;
};

template <WalkEnvironment E>
Decoded<E> decode(const WalkerModel<float>& model, const E& env, const typename E::Instance& inst,
                  const EvalConfig& eval, MctsConfig mcts, Tape<float>& tape) {
    Decoded<E> out;
    if (eval.decoder == Decoder::Mcts) {
        mcts.num_simulations = eval.simulations;
        tape.set_recording(false);
        const auto search = run_search(env, inst, model, mcts, tape);
        out.preds = score_nodes(search.tree, env, inst);
        out.effort = search_effort(search, env, inst);
    } else {
        out.preds = beam_decode(model, env, inst, eval.beam_size, mcts.t_max, tape);
    }
    if (!out.preds.empty()) out.path = out.preds.front().path;
    return out;
}

inline std::size_t query_count(std::size_t n, const EvalConfig& eval) {
    return eval.max_queries > 0 ? std::min(n, eval.max_queries) : n;
}

}  // namespace detail

/// Puzzle accuracy: a query succeeds when its top-ranked node holds the target
/// volume. Also reports the mean search effort (MCTS) and mean rank.
inline EvalReport evaluate_puzzles(const WalkerModel<float>& model, const puzzle::PuzzleEnvironment& env,
                                   const std::vector<puzzle::PuzzleSpec>& specs, const EvalConfig& eval,
                                   const MctsConfig& mcts, int workers = 1) {
    const std::size_t n = detail::query_count(specs.size(), eval);
    EvalReport rep;
    rep.queries.resize(n);
    std::vector<Tape<float>> tapes(static_cast<std::size_t>(std::max(workers, 1)), Tape<float>(false));
    parallel_for(n, workers, [&](std::size_t i, int w) {
        const auto& spec = specs[i];
        const auto d = detail::decode(model, env, spec, eval, mcts, tapes[static_cast<std::size_t>(w)]);
        auto& r = rep.queries[i];
        r.index = i;
        r.candidates = d.preds.size();
        r.effort = d.effort;
        for (std::size_t k = 0; k < d.preds.size(); ++k)
            if (env.reward(spec, d.preds[k].node) > 0) {
                r.rank = static_cast<int>(k) + 1;
                break;
            }
        if (!d.preds.empty()) {
            r.top_score = d.preds.front().score;
            r.prediction = env.describe_node(d.preds.front().node);
        }
        r.path = render_path(env, spec, d.path, mcts.t_max);
    });
    std::vector<int> ranks;
    double effort = 0;
    for (const auto& r : rep.queries) {
        ranks.push_back(r.rank);
        effort += static_cast<double>(r.effort);
    }
    rep.metrics["accuracy"] = hits_at_k(ranks, 1);
    rep.metrics["mrr"] = mrr(ranks);
    rep.metrics["queries"] = static_cast<double>(n);
    if (eval.decoder == Decoder::Mcts) rep.metrics["mean_effort"] = n ? effort / static_cast<double>(n) : 0.0;
    return rep;
}

/// KBC ranking metrics over (head, relation, tail) test triples. With
/// `eval.filtered`, other known tails of (head, relation) in `known` are removed
/// from above the answer before ranking.
inline EvalReport evaluate_triples(const WalkerModel<float>& model, const kb::KbcEnvironment& env,
                                   const std::vector<kb::Triple>& triples, const kb::TailIndex& known,
                                   const EvalConfig& eval, const MctsConfig& mcts, bool mask_query_edge,
                                   int workers = 1) {
    const std::size_t n = detail::query_count(triples.size(), eval);
    EvalReport rep;
    rep.queries.resize(n);
    std::vector<Tape<float>> tapes(static_cast<std::size_t>(std::max(workers, 1)), Tape<float>(false));
    parallel_for(n, workers, [&](std::size_t i, int w) {
        const auto q = env.make_query(triples[i], mask_query_edge);
        const auto d = detail::decode(model, env, q, eval, mcts, tapes[static_cast<std::size_t>(w)]);
        const auto keys = prediction_keys(d.preds);
        std::set<NodeKey> filter;
        if (eval.filtered)
            for (int t : known.tails(q.source, q.relation)) filter.insert(t);
        auto& r = rep.queries[i];
        r.index = i;
        r.rank = filtered_rank(keys, q.target, filter);
        r.candidates = d.preds.size();
        r.effort = d.effort;
        if (!d.preds.empty()) {
            r.top_score = d.preds.front().score;
            r.prediction = env.describe_node(d.preds.front().node);
        }
        r.path = render_path(env, q, d.path, mcts.t_max);
    });
    std::vector<int> ranks;
    double cands = 0;
    for (const auto& r : rep.queries) {
        ranks.push_back(r.rank);
        cands += static_cast<double>(r.candidates);
    }
    rep.metrics["hits@1"] = hits_at_k(ranks, 1);
    rep.metrics["hits@3"] = hits_at_k(ranks, 3);
    rep.metrics["hits@10"] = hits_at_k(ranks, 10);
    rep.metrics["mrr"] = mrr(ranks);
    rep.metrics["mean_candidates"] = n ? cands / static_cast<double>(n) : 0.0;
    rep.metrics["queries"] = static_cast<double>(n);
    return rep;
}

}  // namespace mwalk
