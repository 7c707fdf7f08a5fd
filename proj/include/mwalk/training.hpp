#pragma once

// Trainers: M-Walk (MCTS trajectories + off-policy Q-learning), PG-Walk (REINFORCE
// with a moving-average baseline) and Q-Walk (epsilon-greedy Q-learning without
// search). All three share the walker model.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mwalk/mcts.hpp"
#include "mwalk/parallel.hpp"
#include "mwalk/rng.hpp"
#include "mwalk/walker_model.hpp"

namespace mwalk {

enum class TrainerKind { MWalk, PG, QWalk };

inline const char* to_string(TrainerKind k) {
    switch (k) {
        case TrainerKind::MWalk: return "mwalk";
        case TrainerKind::PG: return "pg";
        case TrainerKind::QWalk: return "qwalk";
    }
    return "?";
}

inline TrainerKind parse_trainer(const std::string& s) {
    if (s == "mwalk") return TrainerKind::MWalk;
    if (s == "pg") return TrainerKind::PG;
    if (s == "qwalk") return TrainerKind::QWalk;
    throw ConfigError("unknown trainer kind: " + s);
}

/// Loss behind the TD update on Q = sigmoid(u). Squared: 1/2 (y - Q)^2, whose
/// gradient on u is (Q - y) Q (1 - Q). CrossEntropy: -y log Q - (1 - y) log(1 - Q),
/// whose gradient on u is Q - y. Both share the fixed point Q = y.
enum class TdLoss { Squared, CrossEntropy };

inline const char* to_string(TdLoss l) { return l == TdLoss::Squared ? "squared" : "cross_entropy"; }

inline TdLoss parse_td_loss(const std::string& s) {
    if (s == "squared") return TdLoss::Squared;
    if (s == "cross_entropy") return TdLoss::CrossEntropy;
    throw ConfigError("unknown TD loss: " + s);
}

struct TrainConfig {
    TrainerKind kind = TrainerKind::MWalk;
    int epochs = 10;
    double lr = 5e-4;
    int batch_size = 8;             // trajectories per Adam step (queries per step for PG)
    int queries_per_iteration = 8;  // queries searched before each round of updates
    int passes = 1;                 // update passes over each round's trajectories
    MctsConfig mcts;
    int rollouts = 32;              // sampled rollouts per query (PG, Q-Walk)
    double epsilon = 0.1;           // Q-Walk exploration
    TdLoss td_loss = TdLoss::CrossEntropy;
    double baseline_decay = 0.99;   // PG moving-average baseline
    std::uint64_t seed = 1;
    int workers = 1;
    int first_epoch = 1;            // > 1 when resuming
    double initial_baseline = 0;    // PG baseline carried over when resuming
};

struct Trajectory {
    std::size_t instance = 0;  // index into the training set
    std::vector<int> actions;  // ends with STOP
    double reward = 0;
};

struct EpochMetrics {
    int epoch = 0;
    double positive_reward_rate = 0;
    double mean_td_error = 0;  // mean |y - Q| (Q-learning) or mean |R - b| (PG)
    std::size_t trajectories = 0;
    double baseline = 0;       // PG baseline after the epoch
    std::map<std::string, double> eval;
};

/// Fraction of trajectories whose terminal reward is positive.
inline double positive_reward_rate(const std::vector<Trajectory>& trajectories) {
    if (trajectories.empty()) return 0.0;
    std::size_t pos = 0;
    for (const auto& t : trajectories) pos += t.reward > 0;
    return static_cast<double>(pos) / static_cast<double>(trajectories.size());
}

/// Q-learning targets along one trajectory: y_t = r for the STOP step and
/// gamma * max_a' Q(s_{t+1}, a') otherwise (intermediate rewards are zero).
inline std::vector<double> td_targets(const std::vector<std::vector<double>>& q_values, const std::vector<int>& actions,
                                      double reward, double gamma) {
    std::vector<double> y(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) {
        if (actions[t] == kStop) {
            y[t] = reward;
        } else {
            if (t + 1 >= q_values.size()) throw ContractError("td_targets: trajectory does not end with STOP");
            const auto& next = q_values[t + 1];
            y[t] = gamma * *std::max_element(next.begin(), next.end());
        }
    }
    return y;
}

struct TdStats {
    double sum_abs_td = 0;
    std::size_t steps = 0;
    double baseline = 0;  // PG only
    double mean() const { return steps ? sum_abs_td / static_cast<double>(steps) : 0.0; }
};

/// Semi-gradient Q-learning on a mini-batch: states are re-encoded with the current
/// parameters, the TD loss of every step is averaged over the batch (targets held
/// constant) and one Adam step is taken. Only Q is evaluated.
template <class T, WalkEnvironment E>
TdStats q_learning_update(WalkerModel<T>& model, const E& env, const std::vector<typename E::Instance>& instances,
                          const std::vector<const Trajectory*>& batch, const AdamConfig& adam, double gamma,
                          int t_max, Tape<T>& tape, TdLoss loss = TdLoss::Squared) {
    TdStats stats;
    if (batch.empty()) return stats;
    const T scale = T(1) / static_cast<T>(batch.size());
    tape.set_recording(true);
    for (const Trajectory* traj : batch) {
        tape.clear();
        const auto steps = encode_path(tape, model, env, instances[traj->instance], traj->actions, t_max);
        std::vector<std::vector<double>> q(steps.size());
        for (std::size_t t = 0; t < steps.size(); ++t) {
            const auto& u = tape.value(steps[t].u);
            q[t] = sigmoid_vec(std::vector<double>(u.begin(), u.end()));
        }
        const auto y = td_targets(q, traj->actions, traj->reward, gamma);
        for (std::size_t t = 0; t < steps.size(); ++t) {
            const auto a = static_cast<std::size_t>(traj->actions[t]);
            const double Q = q[t][a];
            const double err = Q - y[t];
            stats.sum_abs_td += std::abs(err);
            ++stats.steps;
            tape.grad(steps[t].u)[a] += T(loss == TdLoss::Squared ? err * Q * (1 - Q) : err) * scale;
        }
        tape.backward();
    }
    model.params().adam_step(adam);
    return stats;
}

/// Samples one rollout from pi (or epsilon-greedy on Q when epsilon >= 0) without
/// recording gradients.
template <WalkEnvironment E>
Trajectory sample_rollout(const WalkerModel<float>& model, const E& env, const typename E::Instance& inst,
                          std::size_t instance_index, int t_max, Rng& rng, Tape<float>& tape, double epsilon = -1) {
    tape.set_recording(false);
    tape.clear();
    PathEncoder<float, E> walk(tape, model, env, inst, t_max);
    Trajectory traj;
    traj.instance = instance_index;
    while (!walk.terminal()) {
        const auto& u = walk.scores();
        int a = 0;
        if (epsilon >= 0) {
            if (uniform01(rng) < epsilon) {
                a = static_cast<int>(uniform_index(rng, u.size()));
            } else {
                a = static_cast<int>(std::max_element(u.begin(), u.end()) - u.begin());
            }
        } else {
            const auto pi = softmax_tau(std::vector<double>(u.begin(), u.end()), model.config().tau);
            double r = uniform01(rng), acc = 0;
            a = static_cast<int>(pi.size()) - 1;
            for (std::size_t j = 0; j < pi.size(); ++j) {
                acc += pi[j];
                if (r < acc) {
                    a = static_cast<int>(j);
                    break;
                }
            }
        }
        traj.actions.push_back(a);
        walk.advance(a);
    }
    traj.reward = env.reward(inst, walk.state().node);
    return traj;
}

/// Runs MCTS for one query and turns every simulation into a rewarded trajectory.
template <WalkEnvironment E>
std::vector<Trajectory> mcts_trajectories(const WalkerModel<float>& model, const E& env,
                                          const typename E::Instance& inst, std::size_t instance_index,
                                          const MctsConfig& cfg, Tape<float>& tape) {
    tape.set_recording(false);
    auto search = run_search(env, inst, model, cfg, tape);
    std::vector<Trajectory> out;
    out.reserve(search.records.size());
    for (const auto& rec : search.records) {
        const auto* leaf = search.tree.find(rec.terminal_key);
        out.push_back({instance_index, rec.actions(), env.reward(inst, leaf->node)});
    }
    return out;
}

using EvalHook = std::function<std::map<std::string, double>(int epoch)>;
using EpochHook = std::function<void(const EpochMetrics&)>;

struct TrainHooks {
    EvalHook eval;        // called every eval_interval epochs
    int eval_interval = 0;
    EpochHook on_epoch;   // called after every epoch (logging, checkpoints)
};

namespace detail {

template <WalkEnvironment E>
void q_learning_round(WalkerModel<float>& model, const E& env, const std::vector<typename E::Instance>& instances,
                      std::vector<Trajectory>& trajs, const TrainConfig& cfg, Rng& rng, Tape<float>& tape,
                      TdStats& stats) {
    const AdamConfig adam{cfg.lr};
    const std::size_t bs = static_cast<std::size_t>(std::max(cfg.batch_size, 1));
    for (int pass = 0; pass < cfg.passes; ++pass) {
        std::vector<const Trajectory*> order;
        order.reserve(trajs.size());
        for (const auto& t : trajs) order.push_back(&t);
        shuffle(order, rng);
        for (std::size_t i = 0; i < order.size(); i += bs) {
            std::vector<const Trajectory*> batch(order.begin() + static_cast<std::ptrdiff_t>(i),
                                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(i + bs, order.size())));
            const auto s = q_learning_update(model, env, instances, batch, adam, cfg.mcts.gamma, cfg.mcts.t_max, tape, cfg.td_loss);
            stats.sum_abs_td += s.sum_abs_td;
            stats.steps += s.steps;
        }
    }
}

}  // namespace detail

/// Shared epoch loop over epochs first_epoch .. first_epoch + epochs - 1. `round`
/// consumes one group of query indices and returns the trajectories it generated;
/// `stream` numbers the group's first query uniquely across the whole run so that
/// per-query random streams do not depend on where a run was resumed.
template <class Round>
std::vector<EpochMetrics> run_epochs(std::size_t n_instances, const TrainConfig& cfg, const TrainHooks& hooks,
                                     Round&& round) {
    std::vector<EpochMetrics> log;
    const std::size_t group = static_cast<std::size_t>(std::max(cfg.queries_per_iteration, 1));
    for (int epoch = cfg.first_epoch; epoch < cfg.first_epoch + cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, SeedStream::Rollout, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(n_instances);
        for (std::size_t i = 0; i < n_instances; ++i) order[i] = i;
        shuffle(order, rng);
        std::size_t positives = 0, total = 0;
        TdStats stats;
        for (std::size_t i = 0; i < order.size(); i += group) {
            std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(i),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(i + group, order.size())));
            const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * n_instances + i;
            const auto trajs = round(ids, stream, rng, stats);
            for (const auto& t : trajs) positives += t.reward > 0;
            total += trajs.size();
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.trajectories = total;
        m.positive_reward_rate = total ? static_cast<double>(positives) / static_cast<double>(total) : 0.0;
        m.mean_td_error = stats.mean();
        m.baseline = stats.baseline;
        if (hooks.eval && hooks.eval_interval > 0 && epoch % hooks.eval_interval == 0) m.eval = hooks.eval(epoch);
        if (hooks.on_epoch) hooks.on_epoch(m);
        log.push_back(std::move(m));
    }
    return log;
}

/// M-Walk: for each group of queries, run MCTS (E simulations each) with the
/// current parameters, reward every simulation path, then apply Q-learning over
/// shuffled mini-batches of those paths before searching again.
template <WalkEnvironment E>
std::vector<EpochMetrics> train_mwalk(WalkerModel<float>& model, const E& env,
                                      const std::vector<typename E::Instance>& instances, const TrainConfig& cfg,
                                      const TrainHooks& hooks = {}) {
    std::vector<Tape<float>> tapes(static_cast<std::size_t>(std::max(cfg.workers, 1)), Tape<float>(false));
    Tape<float> update_tape(true);
    return run_epochs(instances.size(), cfg, hooks,
                      [&](const std::vector<std::size_t>& ids, std::uint64_t, Rng& rng, TdStats& stats) {
        std::vector<std::vector<Trajectory>> per_query(ids.size());
        parallel_for(ids.size(), cfg.workers, [&](std::size_t k, int w) {
            per_query[k] = mcts_trajectories(model, env, instances[ids[k]], ids[k], cfg.mcts,
                                             tapes[static_cast<std::size_t>(w)]);
        });
        std::vector<Trajectory> trajs;
        for (auto& v : per_query) trajs.insert(trajs.end(), v.begin(), v.end());
        detail::q_learning_round(model, env, instances, trajs, cfg, rng, update_tape, stats);
        return trajs;
    });
}

/// Q-Walk: epsilon-greedy rollouts on Q, then the same Q-learning update.
template <WalkEnvironment E>
std::vector<EpochMetrics> train_qwalk(WalkerModel<float>& model, const E& env,
                                      const std::vector<typename E::Instance>& instances, const TrainConfig& cfg,
                                      const TrainHooks& hooks = {}) {
    std::vector<Tape<float>> tapes(static_cast<std::size_t>(std::max(cfg.workers, 1)), Tape<float>(false));
    Tape<float> update_tape(true);
    return run_epochs(instances.size(), cfg, hooks,
                      [&](const std::vector<std::size_t>& ids, std::uint64_t stream, Rng& rng, TdStats& stats) {
        std::vector<std::vector<Trajectory>> per_query(ids.size());
        parallel_for(ids.size(), cfg.workers, [&](std::size_t k, int w) {
            Rng qrng(derive_seed(cfg.seed, SeedStream::Rollout, (1ULL << 40) + stream + k));
            for (int r = 0; r < cfg.rollouts; ++r)
                per_query[k].push_back(sample_rollout(model, env, instances[ids[k]], ids[k], cfg.mcts.t_max, qrng,
                                                      tapes[static_cast<std::size_t>(w)], cfg.epsilon));
        });
        std::vector<Trajectory> trajs;
        for (auto& v : per_query) trajs.insert(trajs.end(), v.begin(), v.end());
        detail::q_learning_round(model, env, instances, trajs, cfg, rng, update_tape, stats);
        return trajs;
    });
}

/// REINFORCE gradient for one rollout, accumulated into the parameter gradients:
/// d/du_j of -(R - b) log pi(a_t) = -(R - b) (1[j = a_t] - pi_j) / tau, times `scale`.
/// Returns the rollout and its reward. Sampling and recording happen in one pass.
template <WalkEnvironment E>
Trajectory pg_rollout_and_grad(WalkerModel<float>& model, const E& env, const typename E::Instance& inst,
                               std::size_t instance_index, int t_max, double baseline, float scale, Rng& rng,
                               Tape<float>& tape) {
    tape.set_recording(true);
    tape.clear();
    PathEncoder<float, E> walk(tape, model, env, inst, t_max);
    Trajectory traj;
    traj.instance = instance_index;
    std::vector<std::pair<Var, std::vector<double>>> visited;
    while (!walk.terminal()) {
        const auto& u = walk.scores();
        auto pi = softmax_tau(std::vector<double>(u.begin(), u.end()), model.config().tau);
        double r = uniform01(rng), acc = 0;
        int a = static_cast<int>(pi.size()) - 1;
        for (std::size_t j = 0; j < pi.size(); ++j) {
            acc += pi[j];
            if (r < acc) {
                a = static_cast<int>(j);
                break;
            }
        }
        traj.actions.push_back(a);
        visited.emplace_back(walk.current().u, std::move(pi));
        walk.advance(a);
    }
    traj.reward = env.reward(inst, walk.state().node);
    const double adv = traj.reward - baseline;
    if (adv != 0) {
        const double tau = model.config().tau;
        for (std::size_t t = 0; t < visited.size(); ++t) {
            auto& g = tape.grad(visited[t].first);
            const auto& pi = visited[t].second;
            for (std::size_t j = 0; j < pi.size(); ++j) {
                const double ind = static_cast<int>(j) == traj.actions[t] ? 1.0 : 0.0;
                g[j] += static_cast<float>(-adv * (ind - pi[j]) / tau) * scale;
            }
        }
        tape.backward();
    }
    return traj;
}

/// PG-Walk: per group of `batch_size` queries, sample `rollouts` paths each from pi,
/// take one Adam step on the averaged REINFORCE gradient, then move the baseline
/// towards the group's mean return.
template <WalkEnvironment E>
std::vector<EpochMetrics> train_pg(WalkerModel<float>& model, const E& env,
                                   const std::vector<typename E::Instance>& instances, const TrainConfig& cfg,
                                   const TrainHooks& hooks = {}) {
    Tape<float> tape(true);
    double baseline = cfg.initial_baseline;
    TrainConfig grouped = cfg;
    grouped.queries_per_iteration = cfg.batch_size;
    const AdamConfig adam{cfg.lr};
    return run_epochs(instances.size(), grouped, hooks,
                      [&](const std::vector<std::size_t>& ids, std::uint64_t stream, Rng&, TdStats& stats) {
        std::vector<Trajectory> trajs;
        const float scale = 1.0f / static_cast<float>(ids.size() * static_cast<std::size_t>(std::max(cfg.rollouts, 1)));
        double sum_r = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Rng qrng(derive_seed(cfg.seed, SeedStream::Rollout, (1ULL << 41) + stream + k));
            for (int r = 0; r < cfg.rollouts; ++r) {
                auto t = pg_rollout_and_grad(model, env, instances[ids[k]], ids[k], cfg.mcts.t_max, baseline, scale,
                                             qrng, tape);
                stats.sum_abs_td += std::abs(t.reward - baseline);
                ++stats.steps;
                sum_r += t.reward;
                trajs.push_back(std::move(t));
            }
        }
        model.params().adam_step(adam);
        if (!trajs.empty())
            baseline = cfg.baseline_decay * baseline +
                       (1 - cfg.baseline_decay) * sum_r / static_cast<double>(trajs.size());
        stats.baseline = baseline;
        return trajs;
    });
}

template <WalkEnvironment E>
std::vector<EpochMetrics> train(WalkerModel<float>& model, const E& env,
                                const std::vector<typename E::Instance>& instances, const TrainConfig& cfg,
                                const TrainHooks& hooks = {}) {
    switch (cfg.kind) {
        case TrainerKind::MWalk: return train_mwalk(model, env, instances, cfg, hooks);
        case TrainerKind::PG: return train_pg(model, env, instances, cfg, hooks);
        case TrainerKind::QWalk: return train_qwalk(model, env, instances, cfg, hooks);
    }
    return {};
}

}  // namespace mwalk
