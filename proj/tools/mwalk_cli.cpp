// mwalk command-line tool: dataset generation, training, evaluation and prediction.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "mwalk/mwalk.hpp"

namespace fs = std::filesystem;
using namespace mwalk;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("mwalk");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("MWALK_LOG");
    const auto level = spdlog::level::from_str(env ? env : "info");
    // from_str maps unknown names to "off"
    if (env && level == spdlog::level::off && std::string(env) != "off")
        throw ConfigError(std::string("MWALK_LOG: unknown level '") + env + "'");
    spdlog::set_level(level);
}

struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string checkpoint;
    std::string out;
};

void add_run_options(CLI::App* cmd, CommonOptions& o, bool need_checkpoint) {
    cmd->add_option("--config", o.config, "run config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "override a config key: section.key=value");
    cmd->add_option("--seed", o.seed, "master seed (run.seed)");
    cmd->add_option("--workers", o.workers, "parallel workers (run.workers)");
    auto* ck = cmd->add_option("--checkpoint", o.checkpoint,
                               need_checkpoint ? "model checkpoint" : "resume from this checkpoint");
    if (need_checkpoint) ck->required();
}

RunConfig resolve_config(const CommonOptions& o) {
    auto overrides = o.overrides;
    if (o.seed) overrides.push_back("run.seed=" + std::to_string(*o.seed));
    if (o.workers) overrides.push_back("run.workers=" + std::to_string(*o.workers));
    try {
        if (o.config.empty()) return parse_config("", overrides, "<defaults>");
        return load_config(o.config, overrides);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

/// Writes the effective config into `dir` as a read-only file. An existing copy
/// must match, so re-running (or resuming) into the same directory is allowed but
/// silently changing the recorded settings is not.
void write_effective_config(const std::string& dir, const std::string& text) {
    fs::create_directories(dir);
    const fs::path path = fs::path(dir) / "config.cfg";
    if (fs::exists(path)) {
        std::ifstream is(path, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        if (ss.str() != text) throw ConfigError(path.string() + " exists with a different configuration");
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    os.close();
    fs::permissions(path, fs::perms::owner_read | fs::perms::group_read | fs::perms::others_read);
    spdlog::debug("effective config written to {}", path.string());
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void log_metrics(const std::string& title, const std::map<std::string, double>& m) {
    std::ostringstream os;
    for (const auto& [k, v] : m) os << ' ' << k << '=' << v;
    spdlog::info("{}:{}", title, os.str());
}

// ------------------------------------------------------------ environments

struct PuzzleTask {
    puzzle::PuzzleDataset data;
    puzzle::PuzzleEnvironment env;

    explicit PuzzleTask(const RunConfig& c)
        : data(puzzle::read_dataset(c.env.puzzles, c.env.manifest)), env(c.env.horizon, c.env.query_dim) {}

    const std::vector<puzzle::PuzzleSpec>& train_instances() const { return data.train; }

    EvalReport evaluate(const WalkerModel<float>& model, const RunConfig& c, const std::string& split) const {
        if (split != "test" && split != "train") throw ConfigError("puzzle split must be train or test");
        return evaluate_puzzles(model, env, split == "test" ? data.test : data.train, c.eval, c.mcts, c.train.workers);
    }
};

struct KbcTask {
    kb::KbData data;
    kb::KbcEnvironment env;
    kb::TailIndex known;
    std::vector<kb::KbQuery> queries;

    explicit KbcTask(const RunConfig& c)
        : data(kb::load_triples(c.env.train, c.env.valid, c.env.test, c.env.inverse_marker)),
          env(data.graph, c.env.horizon, c.env.entity_dim, c.env.relation_dim) {
        known.add(data.train);
        known.add(data.valid);
        known.add(data.test);
        // Train on the relations that are evaluated; all relations when there is no test split.
        std::set<int> query_relations;
        for (const auto& t : data.test) query_relations.insert(t.relation);
        for (const auto& t : data.train)
            if (query_relations.empty() || query_relations.count(t.relation))
                queries.push_back(env.make_query(t, c.env.mask_query_edge));
        spdlog::info("knowledge graph: {} entities, {} relations, {} edges, {} training queries",
                     data.graph.entities.size(), data.graph.relations.size(), data.graph.edge_count(), queries.size());
    }

    const std::vector<kb::KbQuery>& train_instances() const { return queries; }

    EvalReport evaluate(const WalkerModel<float>& model, const RunConfig& c, const std::string& split) const {
        const std::vector<kb::Triple>* triples = nullptr;
        if (split == "test") triples = &data.test;
        else if (split == "valid") triples = &data.valid;
        else if (split == "train") triples = &data.train;
        else throw ConfigError("kbc split must be train, valid or test");
        return evaluate_triples(model, env, *triples, known, c.eval, c.mcts, c.env.mask_query_edge, c.train.workers);
    }
};

template <class Task>
WalkerModel<float> make_model(const Task& task, const RunConfig& c) {
    return WalkerModel<float>(task.env.layout(), c.model, derive_seed(c.train.seed, SeedStream::Init));
}

Checkpoint load_matching_checkpoint(const std::string& path, const RunConfig& c, WalkerModel<float>& model) {
    auto ck = load_checkpoint_file(path);
    if (ck.config_hash != config_hash(c))
        throw ConfigError("checkpoint " + path + " was written with a different model or environment configuration");
    restore_checkpoint(model.params(), ck);
    return ck;
}

// ------------------------------------------------------------ subcommands

int cmd_puzzle_gen(std::uint64_t seed, const std::string& out) {
    fs::create_directories(out);
    const auto ds = puzzle::generate_dataset(seed);
    const std::string puzzles = (fs::path(out) / "puzzles.txt").string();
    const std::string manifest = (fs::path(out) / "manifest.txt").string();
    puzzle::write_dataset(ds, puzzles, manifest);
    auto c = RunConfig::defaults(EnvKind::Puzzle);
    c.env.puzzles = puzzles;
    c.env.manifest = manifest;
    c.train.seed = seed;
    write_effective_config(out, serialize_config(c));
    spdlog::info("wrote {} train and {} test puzzles to {}", ds.train.size(), ds.test.size(), out);
    return kOk;
}

int cmd_kb_gen(std::uint64_t seed, std::size_t entities, const std::string& out) {
    const auto kbs = kb::generate_synthetic_kb(seed, entities);
    kb::write_synthetic_kb(kbs, out);
    auto c = RunConfig::defaults(EnvKind::Kbc);
    c.env.train = (fs::path(out) / "train.txt").string();
    c.env.valid = (fs::path(out) / "valid.txt").string();
    c.env.test = (fs::path(out) / "test.txt").string();
    c.train.seed = seed;
    write_effective_config(out, serialize_config(c));
    spdlog::info("wrote synthetic KB ({} train, {} valid, {} test triples) to {}", kbs.train.size(), kbs.valid.size(),
                 kbs.test.size(), out);
    return kOk;
}

template <class Task>
int run_train(const RunConfig& c0, const CommonOptions& o) {
    RunConfig c = c0;
    const Task task(c);
    auto model = make_model(task, c);
    const std::string out = o.out;
    write_effective_config(out, serialize_config(c));

    const bool resume = !o.checkpoint.empty();
    if (resume) {
        const auto ck = load_matching_checkpoint(o.checkpoint, c, model);
        c.train.first_epoch = static_cast<int>(ck.epoch) + 1;
        c.train.initial_baseline = ck.baseline;
        c.train.epochs = std::max(0, c0.train.epochs - static_cast<int>(ck.epoch));
        spdlog::info("resuming after epoch {} ({} epochs left)", ck.epoch, c.train.epochs);
    }

    const auto mode = resume ? std::ios::app : std::ios::trunc;
    std::ofstream jsonl(fs::path(out) / "metrics.jsonl", std::ios::binary | mode);
    std::ofstream curve(fs::path(out) / "curve.csv", std::ios::binary | mode);
    if (!jsonl || !curve) throw Error("cannot write metrics into " + out);
    if (!resume) curve << "epoch,trajectories,positive_reward_rate,mean_td_error,baseline\n";

    const std::string eval_split = c.env.kind == EnvKind::Kbc ? "valid" : "test";
    auto evaluate = [&](int epoch) {
        auto m = task.evaluate(model, c, eval_split).metrics;
        log_metrics(fmt::format("epoch {} {} eval", epoch, eval_split), m);
        return m;
    };
    if (!resume && c.eval_interval > 0) {
        nlohmann::json j{{"epoch", 0}, {"eval", evaluate(0)}};
        jsonl << j.dump() << '\n';
    }

    const auto hash = config_hash(c);
    TrainHooks hooks;
    hooks.eval = evaluate;
    hooks.eval_interval = c.eval_interval;
    hooks.on_epoch = [&](const EpochMetrics& m) {
        nlohmann::json j{{"epoch", m.epoch},
                         {"trajectories", m.trajectories},
                         {"positive_reward_rate", m.positive_reward_rate},
                         {"mean_td_error", m.mean_td_error},
                         {"baseline", m.baseline}};
        if (!m.eval.empty()) j["eval"] = m.eval;
        jsonl << j.dump() << '\n' << std::flush;
        curve << m.epoch << ',' << m.trajectories << ',' << m.positive_reward_rate << ',' << m.mean_td_error << ','
              << m.baseline << '\n'
              << std::flush;
        spdlog::info("epoch {}: positive reward rate {:.4f}, |td| {:.5f}", m.epoch, m.positive_reward_rate,
                     m.mean_td_error);
        const bool last = m.epoch == c.train.first_epoch + c.train.epochs - 1;
        if (last || (c.checkpoint_interval > 0 && m.epoch % c.checkpoint_interval == 0)) {
            const auto ck = make_checkpoint(model.params(), hash, static_cast<std::uint64_t>(m.epoch), m.baseline);
            save_checkpoint_file((fs::path(out) / "checkpoint.bin").string(), ck);
            if (!last)
                save_checkpoint_file((fs::path(out) / fmt::format("checkpoint-{:04d}.bin", m.epoch)).string(), ck);
            spdlog::debug("checkpoint written at epoch {}", m.epoch);
        }
    };
    spdlog::info("training {} for {} epochs on {} instances", to_string(c.train.kind), c.train.epochs,
                 task.train_instances().size());
    train(model, task.env, task.train_instances(), c.train, hooks);
    if (c.train.epochs == 0)
        save_checkpoint_file((fs::path(out) / "checkpoint.bin").string(),
                             make_checkpoint(model.params(), hash, static_cast<std::uint64_t>(c.train.first_epoch - 1),
                                             c.train.initial_baseline));
    return kOk;
}

template <class Task>
int run_eval(const RunConfig& c, const CommonOptions& o, const std::string& split) {
    const Task task(c);
    auto model = make_model(task, c);
    load_matching_checkpoint(o.checkpoint, c, model);
    write_effective_config(o.out, serialize_config(c));
    const auto rep = task.evaluate(model, c, split);

    std::ofstream metrics(fs::path(o.out) / "eval_metrics.csv", std::ios::binary);
    metrics << "metric,value\n";
    for (const auto& [k, v] : rep.metrics) metrics << k << ',' << v << '\n';
    std::ofstream queries(fs::path(o.out) / "eval_queries.csv", std::ios::binary);
    queries << "index,rank,candidates,effort,top_score,prediction,path\n";
    for (const auto& q : rep.queries)
        queries << q.index << ',' << q.rank << ',' << q.candidates << ',' << q.effort << ',' << q.top_score << ','
                << csv_field(q.prediction) << ',' << csv_field(q.path) << '\n';
    if (!metrics || !queries) throw Error("cannot write evaluation results into " + o.out);

    std::cout << "decoder " << to_string(c.eval.decoder) << ", split " << split << '\n';
    for (const auto& [k, v] : rep.metrics) std::cout << k << ' ' << v << '\n';
    return kOk;
}

template <WalkEnvironment E>
void print_predictions(const WalkerModel<float>& model, const E& env, const typename E::Instance& inst,
                       const RunConfig& c, std::size_t top, std::ostream& os) {
    Tape<float> tape(false);
    MctsConfig mcts = c.mcts;
    std::vector<RankedPrediction<typename E::Node>> preds;
    if (c.eval.decoder == Decoder::Mcts) {
        mcts.num_simulations = c.eval.simulations;
        preds = mcts_predict(model, env, inst, mcts, tape);
    } else {
        preds = beam_decode(model, env, inst, c.eval.beam_size, mcts.t_max, tape);
    }
    os << "rank\tscore\tnode\tpath\n";
    for (std::size_t i = 0; i < std::min(top, preds.size()); ++i)
        os << i + 1 << '\t' << preds[i].score << '\t' << env.describe_node(preds[i].node) << '\t'
           << render_path(env, inst, preds[i].path, mcts.t_max) << '\n';
}

int run_predict(const RunConfig& c, const CommonOptions& o, const std::string& query, std::size_t top) {
    std::ostringstream os;
    if (c.env.kind == EnvKind::Puzzle) {
        puzzle::PuzzleEnvironment env(c.env.horizon, c.env.query_dim);
        WalkerModel<float> model(env.layout(), c.model, derive_seed(c.train.seed, SeedStream::Init));
        load_matching_checkpoint(o.checkpoint, c, model);
        puzzle::PuzzleSpec spec;
        char s1 = 0, s2 = 0, s3 = 0;
        std::istringstream is(query);
        if (!(is >> spec.A >> s1 >> spec.B >> s2 >> spec.C >> s3 >> spec.q) || s1 != ',' || s2 != ',' || s3 != ',')
            throw DataError("puzzle query must look like A,B,C,q: '" + query + "'");
        if (!puzzle::valid_spec(spec)) throw DataError("invalid puzzle: '" + query + "'");
        print_predictions(model, env, spec, c, top, os);
    } else {
        const KbcTask task(c);
        auto model = make_model(task, c);
        load_matching_checkpoint(o.checkpoint, c, model);
        std::istringstream is(query);
        std::string head, rel;
        if (!(is >> head >> rel)) throw DataError("kbc query must look like '<entity> <relation>': '" + query + "'");
        const kb::KbQuery q{task.data.graph.entities.id(head), task.data.graph.relations.id(rel), -1, false};
        print_predictions(model, task.env, q, c, top, os);
    }
    std::cout << os.str();
    if (!o.out.empty()) {
        write_effective_config(o.out, serialize_config(c));
        std::ofstream(fs::path(o.out) / "predictions.tsv", std::ios::binary) << os.str();
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M-Walk graph walking agent"};
    app.require_subcommand(1);

    std::uint64_t gen_seed = 1;
    std::string gen_out;
    std::size_t kb_entities = 200;
    auto* gen = app.add_subcommand("puzzle-gen", "generate the three-glass puzzle dataset");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    auto* kbgen = app.add_subcommand("kb-gen", "generate a synthetic knowledge base");
    kbgen->add_option("--seed", gen_seed, "generation seed");
    kbgen->add_option("--entities", kb_entities, "number of entities");
    kbgen->add_option("--out", gen_out, "output directory")->required();

    CommonOptions train_opt, eval_opt, pred_opt;
    auto* tr = app.add_subcommand("train", "train a walker (mwalk, pg or qwalk)");
    add_run_options(tr, train_opt, false);
    tr->add_option("--out", train_opt.out, "output directory")->required();

    std::string split = "test";
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_run_options(ev, eval_opt, true);
    ev->add_option("--out", eval_opt.out, "output directory")->required();
    ev->add_option("--split", split, "train, valid or test");

    std::string query;
    std::size_t top = 10;
    auto* pr = app.add_subcommand("predict", "answer one query");
    add_run_options(pr, pred_opt, true);
    pr->add_option("--out", pred_opt.out, "optional output directory");
    pr->add_option("--query", query, "puzzle 'A,B,C,q' or kbc '<entity> <relation>'")->required();
    pr->add_option("--top", top, "number of ranked nodes to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        setup_logging();
        if (gen->parsed()) return cmd_puzzle_gen(gen_seed, gen_out);
        if (kbgen->parsed()) return cmd_kb_gen(gen_seed, kb_entities, gen_out);
        if (tr->parsed()) {
            const auto c = resolve_config(train_opt);
            return c.env.kind == EnvKind::Puzzle ? run_train<PuzzleTask>(c, train_opt) : run_train<KbcTask>(c, train_opt);
        }
        if (ev->parsed()) {
            const auto c = resolve_config(eval_opt);
            return c.env.kind == EnvKind::Puzzle ? run_eval<PuzzleTask>(c, eval_opt, split)
                                                 : run_eval<KbcTask>(c, eval_opt, split);
        }
        if (pr->parsed()) return run_predict(resolve_config(pred_opt), pred_opt, query, top);
    } catch (const ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return kConfig;
    } catch (const DataError& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    } catch (const ParseError& e) {
        spdlog::error("data error: {}", e.what());
        return kData;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kRuntime;
    }
    return kRuntime;
}
