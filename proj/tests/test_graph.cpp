#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "gwr/errors.hpp"
#include "gwr/graph.hpp"
#include "gwr/io.hpp"

using namespace gwr;

namespace {

// brute-force O(n^2) oracle, shares only the distance/kernel primitives
std::set<std::tuple<int, int>> brute_force_edges(std::span<const GeoPoint> pts,
                                                 const KernelConfig& cfg,
                                                 std::map<std::pair<int, int>, double>* weights =
                                                     nullptr) {
    std::set<std::tuple<int, int>> edges;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
        for (int j = i + 1; j < static_cast<int>(pts.size()); ++j) {
            const double d = geodesic_miles(pts[i], pts[j]);
            if (d <= cfg.epsilon) {
                edges.insert({i, j});
                if (weights) (*weights)[{i, j}] = similarity(d, cfg);
            }
        }
    }
    return edges;
}

std::set<std::tuple<int, int>> graph_edges(const SimilarityGraph& g) {
    std::set<std::tuple<int, int>> edges;
    for (int i = 0; i < g.node_count(); ++i) {
        for (const auto& nb : g.neighbors(i)) {
            if (nb.to > i) edges.insert({i, nb.to});
        }
    }
    return edges;
}

std::vector<GeoPoint> random_box(int n, double box_miles, double anchor_lat, double anchor_lon,
                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<GeoPoint> pts(n);
    const double lat_deg = box_miles / 69.0;
    const double lon_deg = box_miles / (69.171 * std::cos(anchor_lat * 3.14159265358979 / 180.0));
    for (auto& p : pts) {
        p.lat = anchor_lat + u(rng) * lat_deg;
        p.lon = anchor_lon + u(rng) * lon_deg;
    }
    return pts;
}

}  // namespace

TEST_CASE("threshold forces collinear topology") {
    // collinear points spaced so adjacent pairs are within epsilon and the
    // outer pair is not (1 mile ~ 1/69 deg lat): only chain edges survive
    std::vector<GeoPoint> pts = {{40.0, -100.0}, {40.0 + 3.0 / 69.0, -100.0},
                                 {40.0 + 6.0 / 69.0, -100.0}};
    KernelConfig cfg;  // epsilon = 5
    const auto g = build_graph(pts, cfg);
    CHECK(graph_edges(g) == std::set<std::tuple<int, int>>{{0, 1}, {1, 2}});

    // a 10-mile outlier keeps only its near edge
    pts[2] = {40.0 + 10.0 / 69.0, -100.0};
    const auto g2 = build_graph(pts, cfg);
    CHECK(graph_edges(g2) == std::set<std::tuple<int, int>>{{0, 1}});
}

TEST_CASE("two identical points produce a single weight-1 edge") {
    std::vector<GeoPoint> pts = {{40.0, -100.0}, {40.0, -100.0}};
    const auto g = build_graph(pts, KernelConfig{});
    REQUIRE(g.edge_count() == 1);
    CHECK(g.neighbors(0)[0].weight == 1.0);
    CHECK(g.neighbors(0)[0].to == 1);
}

TEST_CASE("graph equals brute-force oracle on random point sets") {
    // sizes straddle the brute-force/grid threshold; anchors at several
    // latitudes exercise the cell sizing
    struct Case {
        int n;
        double lat;
        double eps;
    };
    const Case cases[] = {{50, 37.0, 5.0}, {199, 43.0, 3.0}, {200, 43.0, 3.0},
                          {350, 60.0, 5.0}, {500, 0.0, 4.0}};
    int case_idx = 0;
    for (const auto& c : cases) {
        auto pts = random_box(c.n, 10.0, c.lat, -80.0, 1000 + case_idx++);
        KernelConfig cfg;
        cfg.epsilon = c.eps;
        std::map<std::pair<int, int>, double> weights;
        const auto expect = brute_force_edges(pts, cfg, &weights);
        const auto g = build_graph(pts, cfg);
        REQUIRE(graph_edges(g) == expect);
        for (int i = 0; i < g.node_count(); ++i) {
            for (const auto& nb : g.neighbors(i)) {
                if (nb.to > i) {
                    CHECK(std::abs(nb.weight - weights.at({i, nb.to})) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("graph invariants: symmetry, no self-loops, weights in (0,1]") {
    auto pts = random_box(300, 12.0, 43.0, -77.9, 42);
    const auto g = build_graph(pts, KernelConfig{});
    for (int i = 0; i < g.node_count(); ++i) {
        std::set<int> seen;
        for (const auto& nb : g.neighbors(i)) {
            CHECK(nb.to != i);
            CHECK(seen.insert(nb.to).second);  // no duplicate edges
            CHECK(nb.weight > 0.0);
            CHECK(nb.weight <= 1.0);
            // mirror edge with identical weight
            bool found = false;
            for (const auto& back : g.neighbors(nb.to)) {
                if (back.to == i) {
                    found = true;
                    CHECK(back.weight == nb.weight);
                }
            }
            CHECK(found);
        }
    }
}

TEST_CASE("build_graph rejects fewer than 2 points and reports isolated nodes") {
    CHECK_THROWS_AS(build_graph(std::vector<GeoPoint>{{0, 0}}, KernelConfig{}), InvalidInput);

    // one far-away point is isolated but permitted
    std::vector<GeoPoint> pts = {{40.0, -100.0}, {40.001, -100.0}, {45.0, -100.0}};
    GraphBuildReport report;
    const auto g = build_graph(pts, KernelConfig{}, &report);
    CHECK(report.isolated == std::vector<int>{2});
    CHECK(report.node_count == 3);
    CHECK(report.edge_count == 1);
    CHECK(report.mean_degree == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("attach_test_nodes: coincident point gets weight-1 edge, far point is isolated") {
    std::vector<GeoPoint> train = {{40.0, -100.0}, {40.01, -100.0}};
    const auto g = build_graph(train, KernelConfig{});

    std::vector<GeoPoint> test = {{40.0, -100.0}, {44.0, -100.0}};
    GraphBuildReport report;
    const auto ext = attach_test_nodes(g, test, KernelConfig{}, &report);

    REQUIRE(ext.node_count() == 4);
    CHECK(ext.train_count() == 2);
    // coincident test node: neighbor 0 with weight 1
    bool has_unit = false;
    for (const auto& nb : ext.neighbors(2)) {
        if (nb.to == 0 && nb.weight == 1.0) has_unit = true;
    }
    CHECK(has_unit);
    // far test node isolated and reported
    CHECK(ext.degree(3) == 0);
    CHECK(std::find(report.isolated.begin(), report.isolated.end(), 3) != report.isolated.end());
}

TEST_CASE("attach_test_nodes equals brute force minus test-test edges") {
    auto train = random_box(250, 10.0, 43.0, -78.0, 7);
    auto test = random_box(60, 10.0, 43.0, -78.0, 8);
    KernelConfig cfg;
    cfg.epsilon = 4.0;

    const auto g = build_graph(train, cfg);
    const auto ext = attach_test_nodes(g, test, cfg);

    std::vector<GeoPoint> all = train;
    all.insert(all.end(), test.begin(), test.end());
    auto expect = brute_force_edges(all, cfg);
    const int tn = static_cast<int>(train.size());
    for (auto it = expect.begin(); it != expect.end();) {
        const auto [i, j] = *it;
        if (i >= tn && j >= tn) {
            it = expect.erase(it);  // test-test edges are forbidden
        } else {
            ++it;
        }
    }
    CHECK(graph_edges(ext) == expect);

    // original training subgraph unchanged
    for (int i = 0; i < tn; ++i) {
        std::vector<Neighbor> train_only;
        for (const auto& nb : ext.neighbors(i)) {
            if (nb.to < tn) train_only.push_back(nb);
        }
        REQUIRE(train_only.size() == g.neighbors(i).size());
        for (std::size_t k = 0; k < train_only.size(); ++k) {
            CHECK(train_only[k].to == g.neighbors(i)[k].to);
            CHECK(train_only[k].weight == g.neighbors(i)[k].weight);
        }
    }
}

TEST_CASE("attach_test_nodes rejects an empty test set") {
    std::vector<GeoPoint> train = {{40.0, -100.0}, {40.01, -100.0}};
    const auto g = build_graph(train, KernelConfig{});
    CHECK_THROWS_AS(attach_test_nodes(g, std::vector<GeoPoint>{}, KernelConfig{}), InvalidInput);
}

TEST_CASE("graph json round-trip preserves structure") {
    auto pts = random_box(80, 8.0, 43.0, -78.0, 5);
    KernelConfig cfg;
    const auto g = build_graph(pts, cfg);
    std::vector<std::string> ids;
    for (int i = 0; i < g.node_count(); ++i) ids.push_back("n" + std::to_string(i));

    const auto j = graph_to_json(g, cfg, ids);
    CHECK(j.at("node_count").get<int>() == g.node_count());
    CHECK(j.at("edge_count").get<std::size_t>() == g.edge_count());
    CHECK(j.contains("isolated_nodes"));
    CHECK(j.contains("mean_degree"));

    const auto [g2, ids2] = graph_from_json(j);
    CHECK(ids2 == ids);
    REQUIRE(g2.node_count() == g.node_count());
    CHECK(g2.train_count() == g.train_count());
    CHECK(graph_edges(g2) == graph_edges(g));
}
