#include <cstdio>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "gwr/errors.hpp"
#include "gwr/rng.hpp"
#include "gwr/walks.hpp"

using namespace gwr;

namespace {

// hand-assembled graphs for exact topologies
SimilarityGraph star_graph(int leaves, const std::vector<double>& weights) {
    std::vector<GeoPoint> pts(leaves + 1, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(leaves + 1);
    for (int l = 0; l < leaves; ++l) {
        adj[0].push_back({l + 1, weights[l]});
        adj[l + 1].push_back({0, weights[l]});
    }
    return graph_from_edges(std::move(pts), leaves + 1, adj);
}

SimilarityGraph chain_graph(int n, int train_count) {
    std::vector<GeoPoint> pts(n, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(n);
    for (int i = 0; i + 1 < n; ++i) {
        adj[i].push_back({i + 1, 1.0});
        adj[i + 1].push_back({i, 1.0});
    }
    return graph_from_edges(std::move(pts), train_count, adj);
}

}  // namespace

TEST_CASE("transition frequencies follow the weighted law on a star graph") {
    const auto g = star_graph(3, {1.0, 1.0, 1.0});
    auto rng = rng::stream(123, rng::kWalk);
    std::map<int, int> counts;
    const int steps = 100000;
    for (int s = 0; s < steps; ++s) counts[sample_step(g, 0, rng)]++;
    for (int leaf = 1; leaf <= 3; ++leaf) {
        CHECK(std::abs(counts[leaf] / double(steps) - 1.0 / 3.0) < 0.01);
    }
}

TEST_CASE("weights {1,1,2} give probabilities {0.25,0.25,0.5}") {
    const auto g = star_graph(3, {1.0, 1.0, 2.0});
    auto rng = rng::stream(99, rng::kWalk);
    std::map<int, int> counts;
    const int steps = 200000;
    for (int s = 0; s < steps; ++s) counts[sample_step(g, 0, rng)]++;
    CHECK(std::abs(counts[1] / double(steps) - 0.25) < 0.01);
    CHECK(std::abs(counts[2] / double(steps) - 0.25) < 0.01);
    CHECK(std::abs(counts[3] / double(steps) - 0.50) < 0.01);
}

TEST_CASE("two-node graph alternates a,b,a,b") {
    const auto g = chain_graph(2, 2);
    WalkConfig cfg;
    cfg.length = 4;
    cfg.num_sequences = 20;
    const auto walks = random_walks(g, cfg);
    REQUIRE(walks.size() == 20);
    for (const auto& w : walks) {
        REQUIRE(w.nodes.size() == 4);
        const int a = w.nodes[0];
        const int b = 1 - a;
        CHECK(w.nodes == std::vector<int>{a, b, a, b});
        CHECK_FALSE(w.has_test());
    }
}

TEST_CASE("walks respect adjacency and length") {
    const auto g = chain_graph(30, 30);
    WalkConfig cfg;
    cfg.length = 10;
    cfg.num_sequences = 500;
    cfg.seed = 5;
    const auto walks = random_walks(g, cfg);
    REQUIRE(walks.size() == 500);
    for (const auto& w : walks) {
        REQUIRE(w.nodes.size() == 10);
        for (std::size_t t = 0; t + 1 < w.nodes.size(); ++t) {
            CHECK(std::abs(w.nodes[t] - w.nodes[t + 1]) == 1);  // chain edges only
        }
    }
}

TEST_CASE("walk generation is reproducible and order-stable") {
    const auto g = chain_graph(30, 30);
    WalkConfig cfg;
    cfg.length = 8;
    cfg.num_sequences = 200;
    cfg.seed = 77;
    const auto a = random_walks(g, cfg);
    const auto b = random_walks(g, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].nodes == b[i].nodes);

    cfg.seed = 78;
    const auto c = random_walks(g, cfg);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].nodes != c[i].nodes;
    CHECK(any_diff);
}

TEST_CASE("isolated roots are excluded; edgeless graph is an error") {
    // node 2 is isolated
    std::vector<GeoPoint> pts(3, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(3);
    adj[0].push_back({1, 1.0});
    adj[1].push_back({0, 1.0});
    const auto g = graph_from_edges(std::move(pts), 3, adj);

    WalkConfig cfg;
    cfg.length = 4;
    cfg.num_sequences = 100;
    for (const auto& w : random_walks(g, cfg)) {
        for (int node : w.nodes) CHECK(node != 2);
    }

    std::vector<GeoPoint> pts2(2, GeoPoint{40.0, -100.0});
    const auto empty = graph_from_edges(std::move(pts2), 2, std::vector<std::vector<Neighbor>>(2));
    CHECK_THROWS_AS(random_walks(empty, cfg), InvalidInput);
}

TEST_CASE("test sequences contain exactly one test node at the recorded position") {
    // 40 training nodes in a chain, last 5 nodes are test nodes attached to
    // various chain positions
    std::vector<GeoPoint> pts(45, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(45);
    for (int i = 0; i + 1 < 40; ++i) {
        adj[i].push_back({i + 1, 1.0});
        adj[i + 1].push_back({i, 1.0});
    }
    for (int q = 0; q < 5; ++q) {
        const int tn = 40 + q;
        const int anchor = q * 7;
        adj[tn].push_back({anchor, 0.8});
        adj[anchor].push_back({tn, 0.8});
    }
    const auto g = graph_from_edges(std::move(pts), 40, adj);

    WalkConfig cfg;
    cfg.length = 6;
    cfg.seed = 3;
    TestWalkReport report;
    const auto seqs = test_sequences(g, 50, cfg, &report);
    CHECK(report.generated == 5 * 50);
    CHECK(report.isolated.empty());

    for (const auto& w : seqs) {
        REQUIRE(w.nodes.size() == 6);
        REQUIRE(w.has_test());
        int test_count = 0;
        for (std::size_t t = 0; t < w.nodes.size(); ++t) {
            if (g.is_test_node(w.nodes[t])) {
                ++test_count;
                CHECK(static_cast<int>(t) == w.test_position);
            }
        }
        CHECK(test_count == 1);
        for (std::size_t t = 0; t + 1 < w.nodes.size(); ++t) {
            bool adjacent = false;
            for (const auto& nb : g.neighbors(w.nodes[t])) adjacent |= nb.to == w.nodes[t + 1];
            CHECK(adjacent);
        }
    }
}

TEST_CASE("single-neighbor test node: both directions are forced through the anchor") {
    // test node hangs off the end of a chain; its only neighbor is node 0,
    // so positions adjacent to the test node always hold node 0 and the walk
    // can only move along chain edges (training revisits stay legal)
    const int n_train = 12;
    std::vector<GeoPoint> pts(n_train + 1, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(n_train + 1);
    for (int i = 0; i + 1 < n_train; ++i) {
        adj[i].push_back({i + 1, 1.0});
        adj[i + 1].push_back({i, 1.0});
    }
    const int tn = n_train;
    adj[tn].push_back({0, 1.0});
    adj[0].push_back({tn, 1.0});
    const auto g = graph_from_edges(std::move(pts), n_train, adj);

    WalkConfig cfg;
    cfg.length = 5;
    cfg.seed = 9;
    const auto seqs = test_sequences(g, 40, cfg, nullptr);
    REQUIRE(seqs.size() == 40);
    for (const auto& w : seqs) {
        const int k = w.test_position;
        CHECK(w.nodes[k] == tn);
        if (k > 0) CHECK(w.nodes[k - 1] == 0);
        if (k + 1 < static_cast<int>(w.nodes.size())) CHECK(w.nodes[k + 1] == 0);
        for (int t = 0; t + 1 < static_cast<int>(w.nodes.size()); ++t) {
            if (t == k || t + 1 == k) continue;
            CHECK(std::abs(w.nodes[t] - w.nodes[t + 1]) == 1);  // chain adjacency
        }
    }
}

TEST_CASE("isolated test nodes are reported with zero sequences") {
    std::vector<GeoPoint> pts(5, GeoPoint{40.0, -100.0});
    std::vector<std::vector<Neighbor>> adj(5);
    adj[0].push_back({1, 1.0});
    adj[1].push_back({0, 1.0});
    adj[3].push_back({0, 1.0});
    adj[0].push_back({3, 1.0});
    // node 4 (test) isolated
    const auto g = graph_from_edges(std::move(pts), 3, adj);
    TestWalkReport report;
    WalkConfig cfg;
    cfg.length = 3;
    const auto seqs = test_sequences(g, 10, cfg, &report);
    CHECK(report.isolated == std::vector<int>{4});
    for (const auto& w : seqs) CHECK(w.nodes[w.test_position] == 3);
}

TEST_CASE("walk text format round-trips") {
    std::vector<WalkSequence> walks;
    walks.push_back({{12, 7, 44, 3}, 2});
    walks.push_back({{0, 1, 0, 1}, -1});
    const auto path =
        (std::filesystem::temp_directory_path() / "gwr_walks_test.txt").string();
    save_walks(path, walks);

    const auto loaded = load_walks(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].nodes == walks[0].nodes);
    CHECK(loaded[0].test_position == 2);
    CHECK(loaded[1].nodes == walks[1].nodes);
    CHECK(loaded[1].test_position == -1);
    std::remove(path.c_str());
}
