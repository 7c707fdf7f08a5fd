#pragma once

// Policy/Q network with shared scores. For a state with history vector q_t and
// candidate edges (n'_j, e_j):
//   h_j  = f_A([n'_j, e_j])           per-candidate encoding, same FCN for all j
//   h_A  = max_j h_j                  coordinate-wise; zero vector without edges
//   h_S  = f_S(q_t)
//   u_0  = f_pi([h_S, h_A]),  u_j = <h_S, h_j>
//   Q    = sigmoid(u),  pi = softmax_tau(u)
// and the history advances with a GRU:
//   q_0     = GRU(P query, [0, 0, n_S])
//   q_{t+1} = GRU(q_t, [h_A,t, h_{a_t},t, n_{t+1}])

#include <span>
#include <string>
#include <vector>

#include "mwalk/autodiff.hpp"
#include "mwalk/env.hpp"
#include "mwalk/layers.hpp"
#include "mwalk/rng.hpp"
#include "mwalk/tensor.hpp"

namespace mwalk {

struct ModelConfig {
    std::size_t dim = 64;          // M: width of h_S, h_A and every h_j
    std::size_t gru_hidden = 64;
    std::size_t fcn_hidden = 32;   // hidden width of f_A and f_S
    std::size_t stop_hidden = 16;  // hidden width of the STOP head f_pi
    Activation fcn_act = Activation::ReLU;
    Activation fcn_output_act = Activation::Linear;
    Activation stop_act = Activation::ReLU;
    double tau = 1.0;
    double embedding_init = 0.1;
};

template <class T>
class WalkerModel {
public:
    WalkerModel(const FeatureLayout& layout, const ModelConfig& cfg, std::uint64_t seed) : layout_(layout), cfg_(cfg) {
        Rng rng(seed);
        for (const auto& t : layout.tables)
            tables_.push_back(&store_.add("emb/" + t.name, uniform_tensor<T>({t.rows, t.dim}, -cfg.embedding_init,
                                                                             cfg.embedding_init, rng)));
        const std::size_t M = cfg.dim, H = cfg.gru_hidden;
        f_A_ = Fcn<T>::create(store_, "f_A", {layout.node_width + layout.edge_width, cfg.fcn_hidden, M}, cfg.fcn_act,
                              cfg.fcn_output_act, rng);
        f_S_ = Fcn<T>::create(store_, "f_S", {H, cfg.fcn_hidden, M}, cfg.fcn_act, cfg.fcn_output_act, rng);
        f_pi_ = Fcn<T>::create(store_, "f_pi", {2 * M, cfg.stop_hidden, 1}, cfg.stop_act, Activation::Linear, rng);
        auto& P = store_.add("query_proj/W0", glorot<T>(layout.query_width, H, rng));
        auto& Pb = store_.add("query_proj/b0", Tensor<T>({H}));
        query_proj_ = {&P, &Pb};
        gru_ = create_gru(store_, "f_q", 2 * M + layout.node_width, H, rng);
    }

    WalkerModel(const WalkerModel&) = delete;
    WalkerModel& operator=(const WalkerModel&) = delete;
    WalkerModel(WalkerModel&&) = default;
    WalkerModel& operator=(WalkerModel&&) = default;

    /// Same topology, parameters copied into precision U (used for float64 gradient checks).
    template <class U>
    WalkerModel<U> cast() const {
        WalkerModel<U> out(layout_, cfg_, 0);
        out.params().copy_values_from(store_);
        return out;
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }
    const FeatureLayout& layout() const { return layout_; }

    /// Assembles a feature vector: one-hot blocks become constants, embedding slots
    /// become differentiable table lookups.
    Var features(Tape<T>& tape, const Features& f) const {
        std::vector<Var> parts;
        std::vector<T> pending;
        auto flush = [&] {
            if (!pending.empty()) {
                parts.push_back(tape.constant(pending));
                pending.clear();
            }
        };
        for (const auto& s : f) {
            if (s.kind == FeatureSlot::Kind::OneHot) {
                if (s.index >= s.space) throw DimensionError("one-hot index outside its block");
                const std::size_t off = pending.size();
                pending.resize(off + s.space, T(0));
                pending[off + s.index] = T(1);
            } else {
                flush();
                parts.push_back(ops::lookup(tape, *tables_.at(s.space), s.index));
            }
        }
        flush();
        if (parts.empty()) throw DimensionError("empty feature vector");
        if (parts.size() == 1) return parts[0];
        if (parts.size() == 2) return ops::concat(tape, {parts[0], parts[1]});
        Var acc = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) acc = ops::concat(tape, {acc, parts[i]});
        return acc;
    }

    /// h_{n'} = f_A([node features, edge features]).
    Var encode_candidate(Tape<T>& tape, Var node_feats, Var edge_feats) const {
        return f_A_.forward(tape, ops::concat(tape, {node_feats, edge_feats}));
    }

    /// Coordinate-wise max over candidate encodings; zero vector when there are none.
    Var pool_actions(Tape<T>& tape, std::span<const Var> hcand) const {
        if (hcand.empty()) return tape.zeros(cfg_.dim);
        return ops::max_pool(tape, hcand);
    }

    Var project_query(Tape<T>& tape, Var query_feats) const {
        return ops::linear(tape, *query_proj_.W, *query_proj_.b, query_feats);
    }

    /// q_0 = GRU(P query, [0, 0, n_S]).
    Var init_history(Tape<T>& tape, Var query_feats, Var source_feats) const {
        Var h = project_query(tape, query_feats);
        Var zeros = tape.zeros(2 * cfg_.dim);
        return ops::gru(tape, gru_, h, ops::concat(tape, {zeros, source_feats}));
    }

    /// q_{t+1} = GRU(q_t, [h_A, h_chosen, n_{t+1}]).
    Var update_history(Tape<T>& tape, Var q, Var hA, Var h_chosen, Var next_feats) const {
        return ops::gru(tape, gru_, q, ops::concat(tape, {hA, h_chosen, next_feats}));
    }

    Var state_vector(Tape<T>& tape, Var q) const { return f_S_.forward(tape, q); }

    /// u = [f_pi([h_S, h_A]), <h_S, h_1>, ..., <h_S, h_k>].
    Var score(Tape<T>& tape, Var hS, Var hA, std::span<const Var> hcand) const {
        std::vector<Var> parts;
        parts.reserve(hcand.size() + 1);
        parts.push_back(f_pi_.forward(tape, ops::concat(tape, {hS, hA})));
        for (Var h : hcand) parts.push_back(ops::dot(tape, hS, h));
        return ops::stack(tape, std::span<const Var>(parts));
    }

private:
    FeatureLayout layout_;
    ModelConfig cfg_;
    ParamStore<T> store_;
    std::vector<Param<T>*> tables_;
    Fcn<T> f_A_, f_S_, f_pi_;
    typename Fcn<T>::Layer query_proj_{};
    ops::GruParams<T> gru_;
};

struct ActionScores {
    std::vector<double> u;
    std::vector<double> Q;
    std::vector<double> pi;
};

template <class T>
ActionScores action_scores(const std::vector<T>& u, double tau) {
    ActionScores s;
    s.u.assign(u.begin(), u.end());
    s.Q = sigmoid_vec(s.u);
    s.pi = softmax_tau(s.u, tau);
    return s;
}

/// Vars of one encoded state.
struct StepVars {
    Var q;
    Var hS;
    Var hA;
    Var u;
    std::vector<Var> hcand;
};

/// Encodes the candidate set of a state whose history vector is `q` and scores it.
template <class T, WalkEnvironment E>
StepVars encode_state(Tape<T>& tape, const WalkerModel<T>& model, const E& env, const typename E::Instance& inst,
                      Var q, const CandidateSet<typename E::Node>& cands) {
    StepVars s;
    s.q = q;
    s.hcand.reserve(cands.edges.size());
    for (const auto& e : cands.edges)
        s.hcand.push_back(model.encode_candidate(tape, model.features(tape, env.node_features(inst, e.next)),
                                                 model.features(tape, env.edge_features(e.type))));
    s.hA = model.pool_actions(tape, s.hcand);
    s.hS = model.state_vector(tape, q);
    s.u = model.score(tape, s.hS, s.hA, s.hcand);
    return s;
}

template <class T, WalkEnvironment E>
Var initial_history(Tape<T>& tape, const WalkerModel<T>& model, const E& env, const typename E::Instance& inst) {
    return model.init_history(tape, model.features(tape, env.query_features(inst)),
                              model.features(tape, env.node_features(inst, env.start(inst))));
}

/// Walks forward one action at a time, encoding each state on the tape as it goes.
template <class T, WalkEnvironment E>
class PathEncoder {
public:
    using Node = typename E::Node;

    PathEncoder(Tape<T>& tape, const WalkerModel<T>& model, const E& env, const typename E::Instance& inst, int t_max)
        : tape_(&tape), model_(&model), env_(&env), inst_(&inst), t_max_(t_max), state_(initial_state(env, inst)) {
        encode(initial_history(tape, model, env, inst));
    }

    const StepVars& current() const { return current_; }
    const CandidateSet<Node>& candidates() const { return cands_; }
    const WalkState<Node>& state() const { return state_; }
    bool terminal() const { return state_.terminal; }
    const std::vector<T>& scores() const { return tape_->value(current_.u); }

    void advance(int action) {
        state_ = env_step(*env_, state_, cands_, action);
        if (action == kStop) return;
        Var q = model_->update_history(*tape_, current_.q, current_.hA,
                                       current_.hcand[static_cast<std::size_t>(action - 1)],
                                       model_->features(*tape_, env_->node_features(*inst_, state_.node)));
        encode(q);
    }

private:
    void encode(Var q) {
        cands_ = feasible_actions(*env_, *inst_, state_, t_max_);
        current_ = encode_state(*tape_, *model_, *env_, *inst_, q, cands_);
    }

    Tape<T>* tape_;
    const WalkerModel<T>* model_;
    const E* env_;
    const typename E::Instance* inst_;
    int t_max_;
    WalkState<Node> state_;
    CandidateSet<Node> cands_;
    StepVars current_;
};

/// Encodes every state along an action sequence ending in STOP; one StepVars per action.
template <class T, WalkEnvironment E>
std::vector<StepVars> encode_path(Tape<T>& tape, const WalkerModel<T>& model, const E& env,
                                  const typename E::Instance& inst, const std::vector<int>& actions, int t_max) {
    std::vector<StepVars> steps;
    steps.reserve(actions.size());
    PathEncoder<T, E> walk(tape, model, env, inst, t_max);
    for (int a : actions) {
        steps.push_back(walk.current());
        walk.advance(a);
        if (a == kStop) break;
    }
    return steps;
}

}  // namespace mwalk
