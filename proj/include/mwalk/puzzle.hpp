#pragma once

// Three Glass Puzzle: three containers with capacities A >= B >= C, a target
// volume q < A, and twelve container actions plus STOP.

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mwalk/env.hpp"
#include "mwalk/errors.hpp"
#include "mwalk/rng.hpp"

namespace mwalk::puzzle {

inline constexpr int kValueLimit = 50;  // all capacities and contents are < 50
inline constexpr int kActionCount = 13;  // STOP + 12 container actions
inline constexpr int kStatusWidth = 6 * kValueLimit;

struct PuzzleSpec {
    int A = 0, B = 0, C = 0;
    int q = 0;

    int capacity(int container) const { return container == 0 ? A : container == 1 ? B : C; }
    auto operator<=>(const PuzzleSpec&) const = default;
};

struct PuzzleStatus {
    int a = 0, b = 0, c = 0;

    int& at(int container) { return container == 0 ? a : container == 1 ? b : c; }
    int at(int container) const { return container == 0 ? a : container == 1 ? b : c; }
    auto operator<=>(const PuzzleStatus&) const = default;
};

inline bool valid_spec(const PuzzleSpec& s) {
    return s.A >= s.B && s.B >= s.C && s.C >= 1 && s.A < kValueLimit && s.q >= 1 && s.q < s.A;
}

inline bool is_success(const PuzzleSpec& spec, const PuzzleStatus& st) {
    return st.a == spec.q || st.b == spec.q || st.c == spec.q;
}

enum class Kind { Stop, Empty, Fill, Pour };

struct ActionInfo {
    Kind kind;
    int from;  // container index, -1 for STOP
    int to;    // pour target, -1 otherwise
};

/// Action table: index 0 is STOP, then per container X in (A, B, C):
/// Empty X, Fill X, Pour X->(first other), Pour X->(second other).
inline constexpr std::array<ActionInfo, kActionCount> kActions{{
    {Kind::Stop, -1, -1},
    {Kind::Empty, 0, -1}, {Kind::Fill, 0, -1}, {Kind::Pour, 0, 1}, {Kind::Pour, 0, 2},
    {Kind::Empty, 1, -1}, {Kind::Fill, 1, -1}, {Kind::Pour, 1, 0}, {Kind::Pour, 1, 2},
    {Kind::Empty, 2, -1}, {Kind::Fill, 2, -1}, {Kind::Pour, 2, 0}, {Kind::Pour, 2, 1},
}};

inline std::string action_name(int action) {
    static const char* names[] = {"A", "B", "C"};
    const auto& a = kActions.at(static_cast<std::size_t>(action));
    switch (a.kind) {
        case Kind::Stop: return "STOP";
        case Kind::Empty: return std::string("Empty ") + names[a.from];
        case Kind::Fill: return std::string("Fill ") + names[a.from];
        case Kind::Pour: return std::string("Pour ") + names[a.from] + "->" + names[a.to];
    }
    return "?";
}

struct StepResult {
    PuzzleStatus status;
    bool terminal = false;
    bool success = false;
};

/// Applies one of the 13 actions. Every action is legal; some are no-ops.
inline StepResult puzzle_step(const PuzzleSpec& spec, const PuzzleStatus& status, int action) {
    if (action < 0 || action >= kActionCount)
        throw ContractError("puzzle action out of range: " + std::to_string(action));
    const auto& info = kActions[static_cast<std::size_t>(action)];
    StepResult r{status, false, false};
    switch (info.kind) {
        case Kind::Stop:
            r.terminal = true;
            r.success = is_success(spec, status);
            break;
        case Kind::Empty: r.status.at(info.from) = 0; break;
        case Kind::Fill: r.status.at(info.from) = spec.capacity(info.from); break;
        case Kind::Pour: {
            const int moved = std::min(status.at(info.from), spec.capacity(info.to) - status.at(info.to));
            r.status.at(info.from) -= moved;
            r.status.at(info.to) += moved;
            break;
        }
    }
    return r;
}

/// Six 50-way one-hot blocks [A, B, C, a, b, c] as feature slots.
inline Features encode_status_features(const PuzzleSpec& spec, const PuzzleStatus& st) {
    const int values[6] = {spec.A, spec.B, spec.C, st.a, st.b, st.c};
    Features f;
    f.reserve(6);
    for (int v : values) {
        if (v < 0 || v >= kValueLimit)
            throw DimensionError("puzzle value " + std::to_string(v) + " outside [0, " +
                                 std::to_string(kValueLimit) + ")");
        f.push_back(FeatureSlot::one_hot(kValueLimit, static_cast<std::uint32_t>(v)));
    }
    return f;
}

/// Dense 300-dimensional status encoding.
inline std::vector<float> encode_status(const PuzzleSpec& spec, const PuzzleStatus& st) {
    std::vector<float> out(kStatusWidth, 0.0f);
    std::size_t off = 0;
    for (const auto& slot : encode_status_features(spec, st)) {
        out[off + slot.index] = 1.0f;
        off += slot.space;
    }
    return out;
}

inline NodeKey status_key(const PuzzleStatus& s) {
    return static_cast<NodeKey>(s.a) * kValueLimit * kValueLimit + s.b * kValueLimit + s.c;
}

/// Breadth-first search over statuses reachable from (0,0,0) with the 12 container
/// actions. max_depth < 0 means unbounded.
inline bool solvable(const PuzzleSpec& spec, int max_depth = -1) {
    std::vector<int> depth(kValueLimit * kValueLimit * kValueLimit, -1);
    std::deque<PuzzleStatus> frontier{PuzzleStatus{}};
    depth[0] = 0;
    while (!frontier.empty()) {
        const PuzzleStatus s = frontier.front();
        frontier.pop_front();
        if (is_success(spec, s)) return true;
        const int d = depth[static_cast<std::size_t>(status_key(s))];
        if (max_depth >= 0 && d >= max_depth) continue;
        for (int a = 1; a < kActionCount; ++a) {
            const auto next = puzzle_step(spec, s, a).status;
            auto& nd = depth[static_cast<std::size_t>(status_key(next))];
            if (nd < 0) {
                nd = d + 1;
                frontier.push_back(next);
            }
        }
    }
    return false;
}

struct SearchEffort {
    long bfs_expansions = 0;
    long dfs_expansions = 0;
    int bfs_solution_length = 0;
    int dfs_solution_length = 0;
};

/// Node expansions (pops, goal tested on pop, root included) breadth-first and
/// depth-first search need before reaching a success status when the target is
/// known. Children are generated in action-index order; duplicate statuses are pruned.
inline SearchEffort bfs_dfs_steps(const PuzzleSpec& spec) {
    constexpr std::size_t kStates = kValueLimit * kValueLimit * kValueLimit;
    SearchEffort out;
    bool found = false;
    {
        std::vector<int> depth(kStates, -1);
        std::deque<PuzzleStatus> queue{PuzzleStatus{}};
        depth[0] = 0;
        while (!queue.empty()) {
            const PuzzleStatus s = queue.front();
            queue.pop_front();
            ++out.bfs_expansions;
            const int d = depth[static_cast<std::size_t>(status_key(s))];
            if (is_success(spec, s)) {
                out.bfs_solution_length = d;
                found = true;
                break;
            }
            for (int a = 1; a < kActionCount; ++a) {
                const auto next = puzzle_step(spec, s, a).status;
                auto& nd = depth[static_cast<std::size_t>(status_key(next))];
                if (nd < 0) {
                    nd = d + 1;
                    queue.push_back(next);
                }
            }
        }
    }
    if (!found) throw ContractError("bfs_dfs_steps: puzzle has no solution");
    {
        std::vector<char> visited(kStates, 0);
        std::vector<std::pair<PuzzleStatus, int>> stack{{PuzzleStatus{}, 0}};
        while (!stack.empty()) {
            const auto [s, d] = stack.back();
            stack.pop_back();
            auto& seen = visited[static_cast<std::size_t>(status_key(s))];
            if (seen) continue;
            seen = 1;
            ++out.dfs_expansions;
            if (is_success(spec, s)) {
                out.dfs_solution_length = d;
                break;
            }
            for (int a = kActionCount - 1; a >= 1; --a) {
                const auto next = puzzle_step(spec, s, a).status;
                if (!visited[static_cast<std::size_t>(status_key(next))]) stack.push_back({next, d + 1});
            }
        }
    }
    return out;
}

struct PuzzleDataset {
    std::uint64_t seed = 0;
    std::vector<PuzzleSpec> train;
    std::vector<PuzzleSpec> test;
};

/// Rejection-samples unique puzzles: four integers drawn from [1, 50), kept when
/// A >= B >= C, q < A and a solution exists within `max_depth` moves (< 0: any depth).
inline PuzzleDataset generate_dataset(std::uint64_t seed, std::size_t train_count = 500,
                                      std::size_t test_count = 100, int max_depth = 12) {
    Rng rng(seed);
    std::set<PuzzleSpec> seen;
    std::vector<PuzzleSpec> all;
    const std::size_t total = train_count + test_count;
    while (all.size() < total) {
        PuzzleSpec s;
        s.A = 1 + static_cast<int>(uniform_index(rng, kValueLimit - 1));
        s.B = 1 + static_cast<int>(uniform_index(rng, kValueLimit - 1));
        s.C = 1 + static_cast<int>(uniform_index(rng, kValueLimit - 1));
        s.q = 1 + static_cast<int>(uniform_index(rng, kValueLimit - 1));
        if (!valid_spec(s) || seen.count(s)) continue;
        if (!solvable(s, max_depth)) continue;
        seen.insert(s);
        all.push_back(s);
    }
    PuzzleDataset ds;
    ds.seed = seed;
    ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_count));
    ds.test.assign(all.begin() + static_cast<std::ptrdiff_t>(train_count), all.end());
    return ds;
}

/// Writes "A B C q" lines (train first, then test) and a split manifest.
inline void write_dataset(const PuzzleDataset& ds, const std::string& puzzles_path, const std::string& manifest_path) {
    std::ofstream os(puzzles_path, std::ios::binary);
    if (!os) throw Error("cannot write " + puzzles_path);
    for (const auto* part : {&ds.train, &ds.test})
        for (const auto& s : *part) os << s.A << ' ' << s.B << ' ' << s.C << ' ' << s.q << '\n';
    std::ofstream ms(manifest_path, std::ios::binary);
    if (!ms) throw Error("cannot write " + manifest_path);
    ms << "seed " << ds.seed << '\n'
       << "train 0 " << ds.train.size() << '\n'
       << "test " << ds.train.size() << ' ' << ds.train.size() + ds.test.size() << '\n';
}

inline PuzzleDataset read_dataset(const std::string& puzzles_path, const std::string& manifest_path) {
    std::ifstream is(puzzles_path);
    if (!is) throw DataError("cannot open puzzle file " + puzzles_path);
    std::vector<PuzzleSpec> all;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        PuzzleSpec s;
        if (!(ls >> s.A >> s.B >> s.C >> s.q) || !valid_spec(s))
            throw ParseError(puzzles_path, lineno, "expected 'A B C q' with A>=B>=C>=1, 1<=q<A<50");
        all.push_back(s);
    }
    if (all.empty()) throw DataError("empty puzzle file " + puzzles_path);

    PuzzleDataset ds;
    std::ifstream ms(manifest_path);
    if (!ms) throw DataError("cannot open split manifest " + manifest_path);
    lineno = 0;
    while (std::getline(ms, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "seed") {
            ls >> ds.seed;
            continue;
        }
        std::size_t lo = 0, hi = 0;
        if (!(ls >> lo >> hi) || lo > hi || hi > all.size() || (key != "train" && key != "test"))
            throw ParseError(manifest_path, lineno, "expected 'train|test <begin> <end>'");
        auto& dst = key == "train" ? ds.train : ds.test;
        dst.assign(all.begin() + static_cast<std::ptrdiff_t>(lo), all.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return ds;
}

/// The puzzle as an implicit graph-walking environment. Node features are the
/// 300-dimensional status one-hots, edge features a 13-way action one-hot and the
/// query an embedding lookup of q.
class PuzzleEnvironment {
public:
    using Instance = PuzzleSpec;
    using Node = PuzzleStatus;

    explicit PuzzleEnvironment(int horizon = 12, std::size_t query_dim = 64) : horizon_(horizon) {
        layout_.tables.push_back({"query", static_cast<std::size_t>(kValueLimit), query_dim});
        layout_.node_width = kStatusWidth;
        layout_.edge_width = kActionCount;
        layout_.query_width = query_dim;
    }

    Node start(const Instance&) const { return {}; }

    std::vector<Edge<Node>> edges(const Instance& spec, const Node& node) const {
        std::vector<Edge<Node>> out;
        out.reserve(kActionCount - 1);
        for (int a = 1; a < kActionCount; ++a) out.push_back({a, puzzle_step(spec, node, a).status});
        return out;
    }

    double reward(const Instance& spec, const Node& node) const { return is_success(spec, node) ? 1.0 : 0.0; }
    NodeKey node_key(const Node& node) const { return status_key(node); }
    NodeKey query_key(const Instance& spec) const { return spec.q; }
    Features node_features(const Instance& spec, const Node& node) const { return encode_status_features(spec, node); }
    Features edge_features(int type) const {
        return {FeatureSlot::one_hot(kActionCount, static_cast<std::uint32_t>(type))};
    }
    Features query_features(const Instance& spec) const {
        return {FeatureSlot::embedding(0, static_cast<std::uint32_t>(spec.q))};
    }
    const FeatureLayout& layout() const { return layout_; }
    int horizon() const { return horizon_; }

    std::string describe_node(const Node& n) const {
        return "(" + std::to_string(n.a) + "," + std::to_string(n.b) + "," + std::to_string(n.c) + ")";
    }
    std::string describe_edge(int type) const { return action_name(type); }

private:
    int horizon_;
    FeatureLayout layout_;
};

static_assert(WalkEnvironment<PuzzleEnvironment>);

}  // namespace mwalk::puzzle
