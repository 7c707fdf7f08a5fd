#include <gtest/gtest.h>

#include <cstdlib>

#include "mwalk/knowledge_graph.hpp"
#include "mwalk/synthetic_kb.hpp"
#include "test_util.hpp"

using namespace mwalk;
using namespace mwalk::kb;

TEST(KnowledgeGraph, InverseEdgesAndSortedAdjacency) {
    fixtures::TempDir dir("kg_inv");
    const auto data = fixtures::toy_kb(dir);
    const auto& g = data.graph;
    EXPECT_EQ(g.entity_count(), 5u);
    EXPECT_EQ(g.base_relations, 3u);
    EXPECT_EQ(g.relation_count(), 6u);
    EXPECT_EQ(g.relations.name(g.inverse_of(g.relations.id("r"))), "r_inv");
    EXPECT_EQ(g.edge_count(), 8u);
    for (std::size_t h = 0; h < g.entity_count(); ++h) {
        const auto& adj = g.out_edges(static_cast<int>(h));
        EXPECT_TRUE(std::is_sorted(adj.begin(), adj.end()));
        EXPECT_EQ(std::adjacent_find(adj.begin(), adj.end()), adj.end());
        for (const auto& e : adj) EXPECT_TRUE(g.has_edge(e.tail, g.inverse_of(e.relation), static_cast<int>(h)));
    }
    // the test triple never enters the graph
    EXPECT_FALSE(g.has_edge(g.entities.id("a"), g.relations.id("t"), g.entities.id("c")));
}

TEST(KnowledgeGraph, DuplicateTrainingLinesCollapse) {
    fixtures::TempDir dir("kg_dup");
    fixtures::write_text(dir.file("train.txt"), "a\tr\tb\na\tr\tb\r\nb\tr\ta\n");
    const auto data = load_triples(dir.file("train.txt"));
    EXPECT_EQ(data.train_lines, 3u);
    // a-r->b, b-r->a and their inverses
    EXPECT_EQ(data.graph.edge_count(), 4u);
}

TEST(KnowledgeGraph, MarkerCollisionIsRejected) {
    fixtures::TempDir dir("kg_marker");
    fixtures::write_text(dir.file("train.txt"), "a\tr\tb\nb\tr_inv\tc\n");
    EXPECT_THROW(load_triples(dir.file("train.txt")), DataError);
    EXPECT_NO_THROW(load_triples(dir.file("train.txt"), "", "", "^-1"));
    EXPECT_THROW(load_triples(dir.file("train.txt"), "", "", ""), ConfigError);
}

TEST(KnowledgeGraph, ParseErrorReportsLine) {
    fixtures::TempDir dir("kg_parse");
    fixtures::write_text(dir.file("train.txt"), "a\tr\tb\n\na r c\n");
    try {
        load_triples(dir.file("train.txt"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    fixtures::write_text(dir.file("four.txt"), "a\tr\tb\tc\n");
    EXPECT_THROW(load_triples(dir.file("four.txt")), ParseError);
}

TEST(KnowledgeGraph, EmptyOrMissingFileIsDataError) {
    fixtures::TempDir dir("kg_empty");
    fixtures::write_text(dir.file("train.txt"), "");
    EXPECT_THROW(load_triples(dir.file("train.txt")), DataError);
    EXPECT_THROW(load_triples(dir.file("absent.txt")), DataError);
}

TEST(KnowledgeGraph, UnseenTestEntitiesJoinVocabulary) {
    fixtures::TempDir dir("kg_unseen");
    fixtures::write_text(dir.file("train.txt"), "a\tr\tb\n");
    fixtures::write_text(dir.file("test.txt"), "z\tr\ta\n");
    const auto data = load_triples(dir.file("train.txt"), "", dir.file("test.txt"));
    const int z = data.graph.entities.id("z");
    EXPECT_TRUE(data.graph.out_edges(z).empty());
    EXPECT_THROW(data.graph.entities.id("nope"), VocabularyError);
}

TEST(KbcEnvironment, MaskHidesQueryEdgeAndInverse) {
    fixtures::TempDir dir("kg_mask");
    fixtures::write_text(dir.file("train.txt"), "a\tr\tb\na\ts\tb\n");
    const auto data = load_triples(dir.file("train.txt"));
    const auto& g = data.graph;
    KbcEnvironment env(g, 3);
    const int a = g.entities.id("a"), b = g.entities.id("b"), r = g.relations.id("r");
    const KbQuery open{a, r, b, false}, masked{a, r, b, true};
    EXPECT_EQ(env.edges(open, a).size(), 2u);
    const auto from_a = env.edges(masked, a);
    ASSERT_EQ(from_a.size(), 1u);
    EXPECT_EQ(from_a[0].type, g.relations.id("s"));
    const auto from_b = env.edges(masked, b);
    ASSERT_EQ(from_b.size(), 1u);
    EXPECT_EQ(from_b[0].type, g.relations.id("s_inv"));
    // unknown target: nothing to mask
    EXPECT_EQ(env.edges(KbQuery{a, r, -1, true}, a).size(), 2u);
}

TEST(KbcEnvironment, RewardAndReplay) {
    fixtures::TempDir dir("kg_replay");
    const auto data = fixtures::toy_kb(dir);
    KbcEnvironment env(data.graph, 3);
    const auto q = env.make_query(data.test[0], true);
    const auto s1 = replay(env, q, {1, 1, 0}, 3);
    const auto s2 = replay(env, q, {1, 1, 0}, 3);
    EXPECT_EQ(s1.node, data.graph.entities.id("c"));
    EXPECT_EQ(s1.node, s2.node);
    EXPECT_EQ(s1.history, s2.history);
    EXPECT_EQ(terminal_reward(env, q, s1), 1.0);
    EXPECT_EQ(terminal_reward(env, q, replay(env, q, {1, 0}, 3)), 0.0);
    EXPECT_THROW(replay(env, q, {9}, 3), ContractError);
}

TEST(KbcEnvironment, LayoutWidths) {
    fixtures::TempDir dir("kg_layout");
    const auto data = fixtures::toy_kb(dir);
    KbcEnvironment env(data.graph, 3, 4, 8);
    const auto& l = env.layout();
    EXPECT_EQ(l.node_width, 4u);
    EXPECT_EQ(l.edge_width, 8u);
    EXPECT_EQ(l.query_width, 12u);
    EXPECT_EQ(l.width_of(env.query_features(env.make_query(data.test[0], false))), 12u);
}

TEST(TailIndex, CollectsAllKnownTails) {
    TailIndex idx;
    idx.add({{0, 1, 2}, {0, 1, 3}});
    idx.add({{0, 1, 2}, {4, 1, 2}});
    EXPECT_EQ(idx.tails(0, 1), (std::set<int>{2, 3}));
    EXPECT_TRUE(idx.contains(4, 1, 2));
    EXPECT_FALSE(idx.contains(4, 1, 3));
    EXPECT_TRUE(idx.tails(9, 9).empty());
}

TEST(SyntheticKb, CompositesFollowBaseRelations) {
    const auto kb = generate_synthetic_kb(4, 30);
    std::map<std::pair<std::string, std::string>, std::string> base;
    for (const auto& t : kb.train)
        if (t.relation == "r0" || t.relation == "r1" || t.relation == "r2") base[{t.head, t.relation}] = t.tail;
    EXPECT_EQ(base.size(), 90u);
    std::size_t composites = 0;
    for (const auto* part : {&kb.train, &kb.valid, &kb.test})
        for (const auto& t : *part) {
            if (t.relation == "r3") {
                EXPECT_EQ(t.tail, base.at({base.at({t.head, "r0"}), "r1"}));
                ++composites;
            } else if (t.relation == "r4") {
                EXPECT_EQ(t.tail, base.at({base.at({t.head, "r2"}), "r0"}));
                ++composites;
            }
        }
    EXPECT_EQ(composites, 60u);
    EXPECT_EQ(kb.test.size(), 60u - 42u - 6u);
    for (const auto& [k, tail] : base) EXPECT_NE(k.first, tail);
}

TEST(SyntheticKb, RoundTripsThroughLoader) {
    fixtures::TempDir dir("kg_synth");
    write_synthetic_kb(generate_synthetic_kb(2, 20), dir.file("kb"));
    const auto data = load_triples(dir.file("kb/train.txt"), dir.file("kb/valid.txt"), dir.file("kb/test.txt"));
    EXPECT_EQ(data.graph.base_relations, 5u);
    EXPECT_EQ(data.graph.entity_count(), 20u);
}

TEST(KnowledgeGraph, Wn18rrStatistics) {
    const char* root = std::getenv("MWALK_WN18RR_DIR");
    if (!root) GTEST_SKIP() << "set MWALK_WN18RR_DIR to a directory holding train.txt, valid.txt, test.txt";
    const std::string d = root;
    const auto data = load_triples(d + "/train.txt", d + "/valid.txt", d + "/test.txt");
    EXPECT_EQ(data.graph.entity_count(), 40943u);
    EXPECT_EQ(data.graph.base_relations, 11u);
    EXPECT_EQ(data.train_lines, 86835u);
}
