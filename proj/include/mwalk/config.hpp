#pragma once

// Run configuration: a flat "key = value" text format grouped in [section]s.
// Defaults depend on the environment kind; unknown keys are errors.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"
#include "mwalk/evaluate.hpp"
#include "mwalk/layers.hpp"
#include "mwalk/mcts.hpp"
#include "mwalk/training.hpp"
#include "mwalk/walker_model.hpp"

namespace mwalk {

enum class EnvKind { Puzzle, Kbc };

inline const char* to_string(EnvKind k) { return k == EnvKind::Puzzle ? "puzzle" : "kbc"; }

inline EnvKind parse_env_kind(const std::string& s) {
    if (s == "puzzle") return EnvKind::Puzzle;
    if (s == "kbc") return EnvKind::Kbc;
    throw ConfigError("unknown environment kind: " + s);
}

struct EnvConfig {
    EnvKind kind = EnvKind::Puzzle;
    int horizon = 12;
    std::string puzzles;   // puzzle dataset file
    std::string manifest;  // puzzle split manifest
    std::string train;     // KB triple files
    std::string valid;
    std::string test;
    std::string inverse_marker = "_inv";
    std::size_t query_dim = 64;
    std::size_t entity_dim = 4;
    std::size_t relation_dim = 64;
    bool mask_query_edge = true;
};

struct RunConfig {
    EnvConfig env;
    ModelConfig model;
    MctsConfig mcts;
    TrainConfig train;
    EvalConfig eval;
    int eval_interval = 0;
    int checkpoint_interval = 0;

    /// Defaults for an environment kind.
    static RunConfig defaults(EnvKind kind) {
        RunConfig c;
        c.env.kind = kind;
        if (kind == EnvKind::Puzzle) {
            c.env.horizon = 12;
            c.model.fcn_hidden = 32;
            c.model.stop_act = Activation::ReLU;
            c.mcts.c = 0.5;
            c.mcts.beta = 0.2;
            c.mcts.num_simulations = 32;
            c.train.lr = 5e-4;
            c.train.td_loss = TdLoss::Squared;
            c.eval.simulations = 400;
            c.eval.beam_size = 400;
        } else {
            c.env.horizon = 5;
            c.model.fcn_hidden = 64;
            c.model.stop_act = Activation::Tanh;
            c.mcts.c = 2.0;
            c.mcts.beta = 0.5;
            c.mcts.num_simulations = 32;
            c.train.lr = 1e-4;
            c.eval.simulations = 32;
            c.eval.beam_size = 32;
        }
        c.train.batch_size = 8;
        return c;
    }

    /// Copies derived fields (horizon into the search config, search into the trainer).
    void sync() {
        mcts.t_max = env.horizon;
        train.mcts = mcts;
    }

    void validate() const;
};

namespace detail {

struct ConfigKey {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
    std::istringstream is(s);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError("invalid value for " + key + ": '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + s + "'");
}

#define MWALK_NUM(sec, name, field, type)                                                                         \
    ConfigKey {                                                                                                   \
        sec, name, [](const RunConfig& c) { return num_str(c.field); },                                          \
            [](RunConfig& c, const std::string& v) { c.field = parse_number<type>(std::string(sec) + "." + name, v); } \
    }
#define MWALK_STR(sec, name, field) \
    ConfigKey { sec, name, [](const RunConfig& c) { return c.field; }, [](RunConfig& c, const std::string& v) { c.field = v; } }

inline std::string num_str(double v) { return fmt_double(v); }
inline std::string num_str(int v) { return std::to_string(v); }
inline std::string num_str(std::size_t v) { return std::to_string(v); }

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"env", "kind", [](const RunConfig& c) { return std::string(to_string(c.env.kind)); },
         [](RunConfig& c, const std::string& v) { c.env.kind = parse_env_kind(v); }},
        MWALK_NUM("env", "horizon", env.horizon, int),
        MWALK_STR("env", "puzzles", env.puzzles),
        MWALK_STR("env", "manifest", env.manifest),
        MWALK_STR("env", "train", env.train),
        MWALK_STR("env", "valid", env.valid),
        MWALK_STR("env", "test", env.test),
        MWALK_STR("env", "inverse_marker", env.inverse_marker),
        MWALK_NUM("env", "query_dim", env.query_dim, std::size_t),
        MWALK_NUM("env", "entity_dim", env.entity_dim, std::size_t),
        MWALK_NUM("env", "relation_dim", env.relation_dim, std::size_t),
        {"env", "mask_query_edge", [](const RunConfig& c) { return std::string(c.env.mask_query_edge ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.env.mask_query_edge = parse_bool("env.mask_query_edge", v); }},

        MWALK_NUM("model", "dim", model.dim, std::size_t),
        MWALK_NUM("model", "gru_hidden", model.gru_hidden, std::size_t),
        MWALK_NUM("model", "fcn_hidden", model.fcn_hidden, std::size_t),
        MWALK_NUM("model", "stop_hidden", model.stop_hidden, std::size_t),
        {"model", "fcn_activation", [](const RunConfig& c) { return std::string(to_string(c.model.fcn_act)); },
         [](RunConfig& c, const std::string& v) { c.model.fcn_act = parse_activation(v); }},
        {"model", "fcn_output_activation",
         [](const RunConfig& c) { return std::string(to_string(c.model.fcn_output_act)); },
         [](RunConfig& c, const std::string& v) { c.model.fcn_output_act = parse_activation(v); }},
        {"model", "stop_activation", [](const RunConfig& c) { return std::string(to_string(c.model.stop_act)); },
         [](RunConfig& c, const std::string& v) { c.model.stop_act = parse_activation(v); }},
        MWALK_NUM("model", "tau", model.tau, double),
        MWALK_NUM("model", "embedding_init", model.embedding_init, double),

        MWALK_NUM("mcts", "simulations", mcts.num_simulations, int),
        MWALK_NUM("mcts", "c", mcts.c, double),
        MWALK_NUM("mcts", "beta", mcts.beta, double),
        MWALK_NUM("mcts", "gamma", mcts.gamma, double),
        {"mcts", "unvisited_follows_prior",
         [](const RunConfig& c) { return std::string(c.mcts.unvisited_follows_prior ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) {
             c.mcts.unvisited_follows_prior = parse_bool("mcts.unvisited_follows_prior", v);
         }},

        {"train", "trainer", [](const RunConfig& c) { return std::string(to_string(c.train.kind)); },
         [](RunConfig& c, const std::string& v) { c.train.kind = parse_trainer(v); }},
        MWALK_NUM("train", "epochs", train.epochs, int),
        MWALK_NUM("train", "lr", train.lr, double),
        MWALK_NUM("train", "batch_size", train.batch_size, int),
        MWALK_NUM("train", "queries_per_iteration", train.queries_per_iteration, int),
        MWALK_NUM("train", "passes", train.passes, int),
        MWALK_NUM("train", "rollouts", train.rollouts, int),
        MWALK_NUM("train", "epsilon", train.epsilon, double),
        {"train", "td_loss", [](const RunConfig& c) { return std::string(to_string(c.train.td_loss)); },
         [](RunConfig& c, const std::string& v) { c.train.td_loss = parse_td_loss(v); }},
        MWALK_NUM("train", "baseline_decay", train.baseline_decay, double),
        MWALK_NUM("train", "eval_interval", eval_interval, int),
        MWALK_NUM("train", "checkpoint_interval", checkpoint_interval, int),

        {"eval", "decoder", [](const RunConfig& c) { return std::string(to_string(c.eval.decoder)); },
         [](RunConfig& c, const std::string& v) { c.eval.decoder = parse_decoder(v); }},
        MWALK_NUM("eval", "simulations", eval.simulations, int),
        MWALK_NUM("eval", "beam_size", eval.beam_size, int),
        {"eval", "ranking", [](const RunConfig& c) { return std::string(c.eval.filtered ? "filtered" : "raw"); },
         [](RunConfig& c, const std::string& v) {
             if (v != "filtered" && v != "raw") throw ConfigError("eval.ranking must be filtered or raw");
             c.eval.filtered = v == "filtered";
         }},
        MWALK_NUM("eval", "max_queries", eval.max_queries, std::size_t),

        {"run", "seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
         [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("run.seed", v); }},
        MWALK_NUM("run", "workers", train.workers, int),
    };
    return keys;
}

#undef MWALK_NUM
#undef MWALK_STR

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline const ConfigKey& find_key(const std::string& section, const std::string& key) {
    for (const auto& k : config_keys())
        if (k.section == section && k.key == key) return k;
    throw ConfigError("unknown config key: " + section + "." + key);
}

struct Assignment {
    std::string section, key, value;
};

inline std::vector<Assignment> parse_assignments(std::istream& is, const std::string& source) {
    std::vector<Assignment> out;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(source, lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
        if (section.empty()) throw ParseError(source, lineno, "key outside of a section");
        out.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
    }
    return out;
}

}  // namespace detail

inline void RunConfig::validate() const {
    if (env.horizon < 0) throw ConfigError("env.horizon must be >= 0");
    if (model.tau <= 0) throw ConfigError("model.tau must be > 0");
    if (mcts.num_simulations < 1) throw ConfigError("mcts.simulations must be >= 1");
    if (eval.simulations < 1) throw ConfigError("eval.simulations must be >= 1");
    if (eval.beam_size < 1) throw ConfigError("eval.beam_size must be >= 1");
    if (mcts.gamma <= 0 || mcts.gamma > 1) throw ConfigError("mcts.gamma must be in (0, 1]");
    if (mcts.c < 0 || mcts.beta < 0) throw ConfigError("mcts.c and mcts.beta must be >= 0");
    if (train.lr <= 0) throw ConfigError("train.lr must be > 0");
    if (train.batch_size < 1 || train.queries_per_iteration < 1 || train.passes < 1)
        throw ConfigError("train batch sizes and passes must be >= 1");
    if (train.rollouts < 1) throw ConfigError("train.rollouts must be >= 1");
    if (train.epsilon < 0 || train.epsilon > 1) throw ConfigError("train.epsilon must be in [0, 1]");
    if (train.workers < 1) throw ConfigError("run.workers must be >= 1");
    if (model.dim == 0 || model.gru_hidden == 0 || model.fcn_hidden == 0 || model.stop_hidden == 0)
        throw ConfigError("model widths must be positive");
}

/// Canonical text form; parse(serialize(c)) == c.
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    std::string section;
    for (const auto& k : detail::config_keys()) {
        if (k.section != section) {
            if (!section.empty()) os << '\n';
            section = k.section;
            os << '[' << section << "]\n";
        }
        os << k.key << " = " << k.get(c) << '\n';
    }
    return os.str();
}

/// Applies one "section.key=value" override.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("override must look like section.key=value: " + assignment);
    const auto section = detail::trim(assignment.substr(0, dot));
    const auto key = detail::trim(assignment.substr(dot + 1, eq - dot - 1));
    detail::find_key(section, key).set(c, detail::trim(assignment.substr(eq + 1)));
}

/// Parses config text. The environment kind picks the defaults, then every key in
/// the text (and every override) is applied on top.
inline RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                              const std::string& source = "<config>") {
    std::istringstream is(text);
    const auto assignments = detail::parse_assignments(is, source);
    EnvKind kind = EnvKind::Puzzle;
    for (const auto& a : assignments)
        if (a.section == "env" && a.key == "kind") kind = parse_env_kind(a.value);
    for (const auto& o : overrides)
        if (o.rfind("env.kind=", 0) == 0) kind = parse_env_kind(detail::trim(o.substr(9)));
    RunConfig c = RunConfig::defaults(kind);
    for (const auto& a : assignments) detail::find_key(a.section, a.key).set(c, a.value);
    for (const auto& o : overrides) apply_override(c, o);
    c.validate();
    c.sync();
    return c;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), overrides, path);
}

/// FNV-1a over the sections that determine the parameter layout (env and model).
inline std::uint64_t config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& k : detail::config_keys()) {
        if (k.section != "model" && !(k.section == "env" && (k.key == "kind" || k.key.find("_dim") != std::string::npos)))
            continue;
        for (char ch : k.section + "." + k.key + "=" + k.get(c) + "\n") {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace mwalk
