#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gwr/geo.hpp"

namespace gwr {

struct Neighbor {
    int to = 0;
    double weight = 0.0;  // kernel similarity, (0, 1]
};

struct GraphBuildReport {
    int node_count = 0;
    std::size_t edge_count = 0;          // undirected edges
    std::vector<int> isolated;           // node indices with no neighbors
    double mean_degree = 0.0;
    int distance_fallbacks = 0;          // pairs resolved via great-circle fallback
};

// Weighted undirected epsilon-neighborhood graph. Immutable once built; safe
// to share across threads. Nodes [0, train_count) are training nodes; any
// nodes appended by attach_test_nodes are test nodes.
class SimilarityGraph {
public:
    int node_count() const { return static_cast<int>(adj_.size()); }
    int train_count() const { return train_count_; }
    bool is_test_node(int i) const { return i >= train_count_; }

    std::span<const Neighbor> neighbors(int i) const { return adj_[i]; }
    int degree(int i) const { return static_cast<int>(adj_[i].size()); }
    const GeoPoint& point(int i) const { return points_[i]; }

    // Weighted neighbor draw per the random-walk transition law:
    // p_j = w_ij / sum_k w_ik. Precondition: degree(i) > 0.
    int sample_neighbor(int i, std::mt19937_64& rng) const;

    std::size_t edge_count() const;
    std::vector<int> isolated_nodes() const;

private:
    std::vector<std::vector<Neighbor>> adj_;
    std::vector<std::vector<double>> cum_;  // per node, prefix sums of neighbor weights
    std::vector<GeoPoint> points_;
    int train_count_ = 0;

    void finalize();

    friend SimilarityGraph build_graph(std::span<const GeoPoint>, const KernelConfig&,
                                       GraphBuildReport*);
    friend SimilarityGraph attach_test_nodes(const SimilarityGraph&, std::span<const GeoPoint>,
                                             const KernelConfig&, GraphBuildReport*);
    friend SimilarityGraph graph_from_edges(std::vector<GeoPoint>, int,
                                            const std::vector<std::vector<Neighbor>>&);
};

// Builds the epsilon-neighborhood graph: an edge joins i and j iff their
// geodesic distance is <= epsilon, weighted by the kernel similarity of the
// distance. Uses a lat/lon bucket grid above kBruteForceThreshold points,
// brute force below; both paths produce identical graphs.
SimilarityGraph build_graph(std::span<const GeoPoint> points, const KernelConfig& cfg,
                            GraphBuildReport* report = nullptr);

inline constexpr int kBruteForceThreshold = 200;

// Returns an extended graph with the test points appended after the training
// nodes. Test-to-training edges follow the same epsilon/sigma rule; edges
// between two test nodes are never added, so a walk crossing a test node can
// only continue into training territory. The training subgraph is unchanged.
SimilarityGraph attach_test_nodes(const SimilarityGraph& g, std::span<const GeoPoint> test_points,
                                  const KernelConfig& cfg, GraphBuildReport* report = nullptr);

// Assembles a graph from explicit adjacency (tests, file loading). Adjacency
// must already be symmetric, self-loop free, with weights in (0, 1].
SimilarityGraph graph_from_edges(std::vector<GeoPoint> points, int train_count,
                                 const std::vector<std::vector<Neighbor>>& adj);

GraphBuildReport summarize_graph(const SimilarityGraph& g, int distance_fallbacks = 0);

}  // namespace gwr
