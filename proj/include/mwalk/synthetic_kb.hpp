#pragma once

// Small synthetic knowledge base with compositional relations, used as a desk-scale
// KBC benchmark. Base relations r0, r1, r2 map every entity to one random tail;
// r3 = r1 . r0 and r4 = r0 . r2 are two-hop compositions whose triples are split
// into train / valid / test. Base triples are all in train.

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"
#include "mwalk/rng.hpp"

namespace mwalk::kb {

struct NamedTriple {
    std::string head, relation, tail;
};

struct SyntheticKb {
    std::vector<NamedTriple> train, valid, test;
};

inline SyntheticKb generate_synthetic_kb(std::uint64_t seed, std::size_t entities = 200, double train_frac = 0.7,
                                         double valid_frac = 0.1) {
    if (entities < 2) throw ParameterError("synthetic KB needs at least two entities");
    if (train_frac < 0 || valid_frac < 0 || train_frac + valid_frac > 1) throw ParameterError("invalid split fractions");
    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> base;
    for (auto& m : base) {
        m.resize(entities);
        for (std::size_t e = 0; e < entities; ++e) {
            std::size_t t = uniform_index(rng, entities - 1);
            m[e] = t >= e ? t + 1 : t;  // no self loops
        }
    }
    auto name = [](std::size_t e) { return "e" + std::to_string(e); };
    SyntheticKb kb;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t e = 0; e < entities; ++e) kb.train.push_back({name(e), "r" + std::to_string(r), name(base[r][e])});
    std::vector<NamedTriple> composite;
    for (std::size_t e = 0; e < entities; ++e) {
        composite.push_back({name(e), "r3", name(base[1][base[0][e]])});
        composite.push_back({name(e), "r4", name(base[0][base[2][e]])});
    }
    shuffle(composite, rng);
    const auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(composite.size()));
    const auto n_valid = static_cast<std::size_t>(valid_frac * static_cast<double>(composite.size()));
    for (std::size_t i = 0; i < composite.size(); ++i) {
        auto& dst = i < n_train ? kb.train : i < n_train + n_valid ? kb.valid : kb.test;
        dst.push_back(composite[i]);
    }
    return kb;
}

inline void write_triples(const std::string& path, const std::vector<NamedTriple>& triples) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    for (const auto& t : triples) os << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
    if (!os) throw Error("write failed: " + path);
}

/// Writes train.txt, valid.txt and test.txt into `dir` (created if missing).
inline void write_synthetic_kb(const SyntheticKb& kb, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_triples(dir + "/train.txt", kb.train);
    write_triples(dir + "/valid.txt", kb.valid);
    write_triples(dir + "/test.txt", kb.test);
}

}  // namespace mwalk::kb
