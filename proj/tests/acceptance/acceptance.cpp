// Acceptance harness. Trains and evaluates the puzzle and synthetic KB setups,
// runs the property suites from the unit-test binary, and prints one line per
// criterion:  [PASS|FAIL|SKIP] <id> <name> | <measured values>
//
// The process exits 0 when every criterion was evaluated (whatever the verdicts)
// and 1 on a harness error. With --strict any FAIL also exits 1.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mwalk/mwalk.hpp"

namespace fs = std::filesystem;
using namespace mwalk;

namespace {

using Clock = std::chrono::steady_clock;

double minutes_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

struct Report {
    int failed = 0;
    std::vector<std::string> lines;

    void add(const std::string& id, const std::string& name, const char* verdict, const std::string& detail) {
        const std::string line = std::string("[") + verdict + "] " + id + " " + name + " | " + detail;
        std::cout << line << std::endl;
        lines.push_back(line);
    }
    void check(const std::string& id, const std::string& name, bool ok, const std::string& detail) {
        failed += !ok;
        add(id, name, ok ? "PASS" : "FAIL", detail);
    }
    void skip(const std::string& id, const std::string& name, const std::string& why) { add(id, name, "SKIP", why); }
};

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ------------------------------------------------------------ puzzle

struct PuzzleOptions {
    std::uint64_t data_seed = 1;
    std::uint64_t seed = 1;
    int epochs = 150;
    int workers = 1;
};

struct PuzzleResults {
    std::vector<EpochMetrics> mwalk_log, pg_log;
    std::vector<std::pair<int, double>> mcts_acc;  // (budget, accuracy)
    double mwalk_beam = 0, pg_beam = 0;
    double mwalk_effort = 0, bfs_effort = 0, dfs_effort = 0;
    double train_minutes = 0;
};

RunConfig puzzle_config(const PuzzleOptions& o, TrainerKind kind) {
    auto c = RunConfig::defaults(EnvKind::Puzzle);
    c.train.kind = kind;
    c.train.epochs = o.epochs;
    c.train.seed = o.seed;
    c.train.workers = o.workers;
    c.validate();
    c.sync();
    return c;
}

PuzzleResults run_puzzle(const PuzzleOptions& o) {
    PuzzleResults res;
    const auto ds = puzzle::generate_dataset(o.data_seed);
    const puzzle::PuzzleEnvironment env(12, 64);

    const auto mc = puzzle_config(o, TrainerKind::MWalk);
    WalkerModel<float> mwalk(env.layout(), mc.model, derive_seed(o.seed, SeedStream::Init));
    TrainHooks hooks;
    hooks.on_epoch = [](const EpochMetrics& m) {
        if (m.epoch % 10 == 0) progress("puzzle mwalk epoch " + std::to_string(m.epoch) + " prr " + fmt(m.positive_reward_rate));
    };
    const auto t0 = Clock::now();
    res.mwalk_log = train(mwalk, env, ds.train, mc.train, hooks);
    res.train_minutes = minutes_since(t0);

    const auto pc = puzzle_config(o, TrainerKind::PG);
    WalkerModel<float> pg(env.layout(), pc.model, derive_seed(o.seed, SeedStream::Init));
    hooks.on_epoch = [](const EpochMetrics& m) {
        if (m.epoch % 10 == 0) progress("puzzle pg epoch " + std::to_string(m.epoch) + " prr " + fmt(m.positive_reward_rate));
    };
    res.pg_log = train(pg, env, ds.train, pc.train, hooks);

    EvalConfig ev = mc.eval;
    ev.decoder = Decoder::Mcts;
    for (int budget : {1, 10, 50, 100, 200, 400}) {
        ev.simulations = budget;
        const auto rep = evaluate_puzzles(mwalk, env, ds.test, ev, mc.mcts, o.workers);
        res.mcts_acc.emplace_back(budget, rep.metrics.at("accuracy"));
        if (budget == 400) res.mwalk_effort = rep.metrics.at("mean_effort");
        progress("puzzle mcts@" + std::to_string(budget) + " accuracy " + fmt(rep.metrics.at("accuracy")));
    }
    ev.decoder = Decoder::Beam;
    ev.beam_size = 400;
    res.mwalk_beam = evaluate_puzzles(mwalk, env, ds.test, ev, mc.mcts, o.workers).metrics.at("accuracy");
    res.pg_beam = evaluate_puzzles(pg, env, ds.test, ev, pc.mcts, o.workers).metrics.at("accuracy");

    for (const auto& spec : ds.test) {
        const auto e = puzzle::bfs_dfs_steps(spec);
        res.bfs_effort += static_cast<double>(e.bfs_expansions);
        res.dfs_effort += static_cast<double>(e.dfs_expansions);
    }
    res.bfs_effort /= static_cast<double>(ds.test.size());
    res.dfs_effort /= static_cast<double>(ds.test.size());
    return res;
}

/// Trailing moving average of the positive-reward rate over `window` epochs.
std::vector<double> windowed_prr(const std::vector<EpochMetrics>& log, std::size_t window) {
    std::vector<double> out(log.size());
    double sum = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        sum += log[i].positive_reward_rate;
        if (i >= window) sum -= log[i - window].positive_reward_rate;
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

void report_puzzle(const PuzzleResults& r, Report& rep) {
    auto acc = [&](int b) {
        for (const auto& [budget, a] : r.mcts_acc)
            if (budget == b) return a;
        return 0.0;
    };
    const double a400 = acc(400);
    rep.check("1", "puzzle M-Walk MCTS-400 accuracy >= 0.90", a400 >= 0.90,
              "accuracy " + fmt(a400) + ", training " + fmt(r.train_minutes, 1) + " min");

    const bool order = a400 - r.mwalk_beam >= 0.10 && r.mwalk_beam - r.pg_beam >= 0.10;
    rep.check("2", "MCTS > M-Walk beam > PG beam at 400, gaps >= 0.10", order,
              "mcts " + fmt(a400) + ", mwalk beam " + fmt(r.mwalk_beam) + ", pg beam " + fmt(r.pg_beam));

    bool monotone = true;
    std::string curve;
    for (std::size_t i = 0; i < r.mcts_acc.size(); ++i) {
        if (i > 0 && r.mcts_acc[i].second < r.mcts_acc[i - 1].second) monotone = false;
        curve += (i ? " " : "") + std::to_string(r.mcts_acc[i].first) + ":" + fmt(r.mcts_acc[i].second, 2);
    }
    const double gain = a400 - acc(10);
    rep.check("3", "MCTS accuracy non-decreasing in rollouts, acc400 - acc10 >= 0.20", monotone && gain >= 0.20,
              curve + ", gain " + fmt(gain));

    const std::size_t n = std::min(r.mwalk_log.size(), r.pg_log.size());
    const std::size_t window = std::max<std::size_t>(1, n / 20);
    const auto m = windowed_prr(r.mwalk_log, window), p = windowed_prr(r.pg_log, window);
    bool every = n > 0;
    double diff = 0;
    std::size_t count = 0;
    for (std::size_t i = n / 4; i < n; ++i) {
        every = every && m[i] > p[i];
        diff += m[i] - p[i];
        ++count;
    }
    diff = count ? diff / static_cast<double>(count) : 0.0;
    rep.check("4", "M-Walk positive-reward rate above PG after first quartile, mean gap >= 0.10",
              every && diff >= 0.10 && count > 0,
              "window " + std::to_string(window) + ", mean gap " + fmt(diff) + ", above at every epoch: " +
                  (every ? "yes" : "no") + ", final mwalk " + fmt(n ? m[n - 1] : 0) + " pg " + fmt(n ? p[n - 1] : 0));

    rep.check("7", "M-Walk search effort below BFS and DFS", r.mwalk_effort < r.bfs_effort && r.mwalk_effort < r.dfs_effort,
              "mwalk " + fmt(r.mwalk_effort, 1) + ", bfs " + fmt(r.bfs_effort, 1) + ", dfs " + fmt(r.dfs_effort, 1));
}

// ------------------------------------------------------------ knowledge base

struct KbOptions {
    std::uint64_t seed = 1;
    double minutes = 30;
    int max_epochs = 200;
    int eval_every = 5;
    int workers = 1;
};

struct KbRun {
    kb::KbData data;
    kb::TailIndex known;
};

KbRun load_kb(const fs::path& dir, const RunConfig& c) {
    KbRun run{kb::load_triples((dir / "train.txt").string(),
                                  fs::exists(dir / "valid.txt") ? (dir / "valid.txt").string() : "",
                                  (dir / "test.txt").string(), c.env.inverse_marker),
              {}};
    run.known.add(run.data.train);
    run.known.add(run.data.valid);
    run.known.add(run.data.test);
    return run;
}

std::vector<kb::KbQuery> training_queries(const kb::KbData& data, const kb::KbcEnvironment& env, bool mask) {
    std::set<int> rels;
    for (const auto& t : data.test) rels.insert(t.relation);
    std::vector<kb::KbQuery> out;
    for (const auto& t : data.train)
        if (rels.empty() || rels.count(t.relation)) out.push_back(env.make_query(t, mask));
    return out;
}

/// Trains one epoch at a time until the time budget runs out, validation HITS@1
/// reaches `stop_at`, or `max_epochs` is hit. Returns the number of epochs trained.
int train_with_budget(WalkerModel<float>& model, const kb::KbcEnvironment& env, const KbRun& run, RunConfig c,
                      const KbOptions& o, double stop_at, Clock::time_point t0) {
    const auto queries = training_queries(run.data, env, c.env.mask_query_edge);
    double baseline = 0;
    int epoch = 0;
    while (epoch < o.max_epochs && minutes_since(t0) < o.minutes) {
        ++epoch;
        c.train.first_epoch = epoch;
        c.train.epochs = 1;
        c.train.initial_baseline = baseline;
        const auto log = train(model, env, queries, c.train);
        baseline = log.back().baseline;
        if (epoch % o.eval_every == 0 && !run.data.valid.empty()) {
            const auto m = evaluate_triples(model, env, run.data.valid, run.known, c.eval, c.mcts, c.env.mask_query_edge,
                                            o.workers)
                               .metrics;
            progress("kb epoch " + std::to_string(epoch) + " prr " + fmt(log.back().positive_reward_rate) +
                     " valid hits@1 " + fmt(m.at("hits@1")) + " (" + fmt(minutes_since(t0), 1) + " min)");
            if (m.at("hits@1") >= stop_at) break;
        }
    }
    return epoch;
}

void run_synthetic_kb(const KbOptions& o, Report& rep) {
    const auto t0 = Clock::now();
    const fs::path dir = fs::temp_directory_path() / ("mwalk_acceptance_kb_" + std::to_string(o.seed));
    kb::write_synthetic_kb(kb::generate_synthetic_kb(o.seed, 200), dir.string());
    auto c = RunConfig::defaults(EnvKind::Kbc);
    c.env.horizon = 3;
    c.train.lr = 5e-4;
    c.train.seed = o.seed;
    c.train.workers = o.workers;
    c.sync();
    const auto run = load_kb(dir, c);
    const kb::KbcEnvironment env(run.data.graph, c.env.horizon, c.env.entity_dim, c.env.relation_dim);
    WalkerModel<float> model(env.layout(), c.model, derive_seed(o.seed, SeedStream::Init));
    const int epochs = train_with_budget(model, env, run, c, o, 0.95, t0);
    const auto m = evaluate_triples(model, env, run.data.test, run.known, c.eval, c.mcts, c.env.mask_query_edge, o.workers)
                       .metrics;
    const double minutes = minutes_since(t0);
    fs::remove_all(dir);
    rep.check("5a", "synthetic KB (200 entities, 5 relations) test HITS@1 >= 0.9 within 30 min",
              m.at("hits@1") >= 0.9 && minutes <= 30.0,
              std::to_string(run.data.graph.base_relations) + " relations, hits@1 " + fmt(m.at("hits@1")) + ", hits@3 " + fmt(m.at("hits@3")) + ", mrr " + fmt(m.at("mrr")) + ", " +
                  std::to_string(epochs) + " epochs, " + fmt(minutes, 1) + " min");
}

/// One NELL-995 relation task directory holding train.txt (graph plus training
/// triples of the relation) and test.txt. When sort_test.pairs is present its
/// labelled candidates ("thing$head,thing$tail: +|-") are ranked by Score;
/// otherwise MCTS candidates are ranked directly against the known test tails.
void run_nell(const fs::path& dir, int workers, Report& rep) {
    auto c = RunConfig::defaults(EnvKind::Kbc);
    c.env.horizon = 8;
    c.train.epochs = 20;
    c.train.workers = workers;
    c.sync();
    const auto run = load_kb(dir, c);
    const kb::KbcEnvironment env(run.data.graph, c.env.horizon, c.env.entity_dim, c.env.relation_dim);
    WalkerModel<float> model(env.layout(), c.model, derive_seed(c.train.seed, SeedStream::Init));
    train(model, env, training_queries(run.data, env, true), c.train);

    MctsConfig mcts = c.mcts;
    mcts.num_simulations = c.eval.simulations;
    Tape<float> tape(false);
    auto scores_for = [&](int head, int relation) {
        std::map<NodeKey, double> s;
        for (const auto& p : mcts_predict(model, env, kb::KbQuery{head, relation, -1, false}, mcts, tape))
            s[p.key] = p.score;
        return s;
    };
    std::vector<std::pair<std::vector<NodeKey>, std::set<NodeKey>>> lists;
    std::string protocol;
    const int relation = run.data.test.empty() ? -1 : run.data.test.front().relation;
    if (fs::exists(dir / "sort_test.pairs")) {
        protocol = "labelled candidates";
        std::ifstream is(dir / "sort_test.pairs");
        std::map<int, std::vector<std::pair<int, bool>>> by_head;
        std::string line;
        auto strip = [](std::string s) { return s.rfind("thing$", 0) == 0 ? s.substr(6) : s; };
        while (std::getline(is, line)) {
            const auto comma = line.find(','), colon = line.rfind(':');
            if (comma == std::string::npos || colon == std::string::npos) continue;
            const auto h = strip(line.substr(0, comma)), t = strip(line.substr(comma + 1, colon - comma - 1));
            if (!run.data.graph.entities.contains(h) || !run.data.graph.entities.contains(t)) continue;
            by_head[run.data.graph.entities.id(h)].emplace_back(run.data.graph.entities.id(t),
                                                                line.find('+', colon) != std::string::npos);
        }
        for (const auto& [head, cands] : by_head) {
            const auto s = scores_for(head, relation);
            std::vector<std::pair<double, NodeKey>> ranked;
            std::set<NodeKey> rel;
            for (const auto& [t, pos] : cands) {
                const auto it = s.find(t);
                ranked.emplace_back(it == s.end() ? 0.0 : it->second, t);
                if (pos) rel.insert(t);
            }
            std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
            std::vector<NodeKey> keys;
            for (const auto& [sc, k] : ranked) keys.push_back(k);
            lists.emplace_back(keys, rel);
        }
    } else {
        protocol = "MCTS candidates (fallback)";
        std::map<int, std::set<NodeKey>> tails;
        for (const auto& t : run.data.test) tails[t.head].insert(t.tail);
        for (const auto& [head, rel] : tails) {
            const auto s = scores_for(head, relation);
            std::vector<std::pair<double, NodeKey>> ranked;
            for (const auto& [k, sc] : s) ranked.emplace_back(sc, k);
            std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
            std::vector<NodeKey> keys;
            for (const auto& [sc, k] : ranked) keys.push_back(k);
            lists.emplace_back(keys, rel);
        }
    }
    const double map = map_score(lists) * 100;
    rep.check("5b", "NELL-995 relation MAP within 5 points of 97.8", std::abs(map - 97.8) <= 5.0,
              "MAP " + fmt(map, 1) + " over " + std::to_string(lists.size()) + " heads, " + protocol);
}

// ------------------------------------------------------------ property suites

void run_properties(const std::string& unit_tests, Report& rep) {
    const std::vector<std::tuple<std::string, std::string, std::string>> suites = {
        {"6.1", "full-model gradient check < 1e-4 (float64)", "WalkerModel.FullModelGradientCheck*:GradCheck.*"},
        {"6.2", "MCTS backup increments, W/N bounds, PUCT hand examples",
         "Backup.*:Search.ConservationAndValueBounds:Puct.*"},
        {"6.3", "argmax Q == argmax pi", "WalkerModel.ArgmaxQEqualsArgmaxPi*"},
        {"6.4", "metric oracles on 100 random instances", "Metrics.*"},
        {"6.5", "tabular Q-learning chain within 1e-3 of value iteration", "QLearning.TabularChainMatchesValueIteration"},
        {"6.6", "same master seed gives identical metric logs",
         "Training.SameSeedSameMetricLog:Search.DeterministicRecords:PuzzleDataset.SameSeedByteIdentical"},
    };
    for (const auto& [id, name, filter] : suites) {
        if (unit_tests.empty()) {
            rep.skip(id, name, "no --unit-tests binary given");
            continue;
        }
        const std::string cmd = "\"" + unit_tests + "\" --gtest_brief=1 --gtest_filter='" + filter + "' > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        rep.check(id, name, rc == 0, "gtest filter " + filter + (rc == 0 ? " passed" : " FAILED"));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M-Walk acceptance harness"};
    std::string unit_tests;
    bool strict = false;
    std::string only;
    PuzzleOptions po;
    KbOptions ko;
    int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--unit-tests", unit_tests, "path to the mwalk_tests binary for the property suites");
    app.add_flag("--strict", strict, "exit 1 when any criterion fails");
    app.add_option("--only", only, "run one group: puzzle, kb, nell or properties");
    app.add_option("--puzzle-epochs", po.epochs, "puzzle training epochs (M-Walk and PG)");
    app.add_option("--seed", po.seed, "training seed");
    app.add_option("--workers", workers, "parallel workers");
    CLI11_PARSE(app, argc, argv);
    po.workers = ko.workers = workers;
    ko.seed = po.seed;

    Report rep;
    const auto t0 = Clock::now();
    try {
        if (only.empty() || only == "properties") run_properties(unit_tests, rep);
        if (only.empty() || only == "kb") run_synthetic_kb(ko, rep);
        if (only.empty() || only == "nell") {
            const char* nell = std::getenv("MWALK_NELL995_DIR");
            if (nell && *nell)
                run_nell(nell, workers, rep);
            else
                rep.skip("5b", "NELL-995 relation MAP within 5 points of 97.8", "set MWALK_NELL995_DIR to run");
        }
        if (only.empty() || only == "puzzle") report_puzzle(run_puzzle(po), rep);
    } catch (const std::exception& e) {
        std::cerr << "acceptance harness error: " << e.what() << std::endl;
        return 1;
    }
    std::cout << "summary: " << rep.lines.size() << " criteria, " << rep.failed << " failed, " << fmt(minutes_since(t0), 1)
              << " min" << std::endl;
    return strict && rep.failed ? 1 : 0;
}
