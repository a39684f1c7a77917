#include "gwr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <unordered_map>

#include "gwr/errors.hpp"
#include "gwr/parallel.hpp"

namespace gwr {

namespace {

// Conservative lower bounds on miles per degree, used only to size grid cells
// so that every pair within epsilon lands in adjacent cells. True values are
// ~68.7 (latitude) and ~69.17*cos(lat) (longitude); the margin absorbs
// ellipsoid variation.
constexpr double kMinMilesPerDegLat = 60.0;
constexpr double kMinMilesPerDegLonEq = 60.0;

struct PairHit {
    int i, j;
    double weight;
};

std::int64_t cell_key(int cx, int cy) {
    return (static_cast<std::int64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy);
}

// Candidate pairs (i < j, i in [lo, hi)) whose distance is <= epsilon,
// including edge weights. `points` spans the full node set; `query_lo` bounds
// the j side (used by attach_test_nodes to forbid test-test pairs).
void scan_pairs_grid(std::span<const GeoPoint> points, const KernelConfig& cfg,
                     std::int64_t lo, std::int64_t hi,
                     const std::unordered_map<std::int64_t, std::vector<int>>& grid,
                     double cell_lat, double cell_lon,
                     std::vector<PairHit>& out, int& fallbacks) {
    bool fell = false;
    for (std::int64_t i = lo; i < hi; ++i) {
        const int cx = static_cast<int>(std::floor(points[i].lon / cell_lon));
        const int cy = static_cast<int>(std::floor(points[i].lat / cell_lat));
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                auto it = grid.find(cell_key(cx + dx, cy + dy));
                if (it == grid.end()) continue;
                for (int j : it->second) {
                    if (j <= i) continue;
                    const double d = geodesic_miles(points[i], points[j], &fell);
                    if (fell) ++fallbacks;
                    if (d <= cfg.epsilon) {
                        out.push_back({static_cast<int>(i), j, similarity(d, cfg)});
                    }
                }
            }
        }
    }
}

void scan_pairs_brute(std::span<const GeoPoint> points, const KernelConfig& cfg,
                      std::int64_t lo, std::int64_t hi, int j_begin,
                      std::vector<PairHit>& out, int& fallbacks) {
    bool fell = false;
    const int n = static_cast<int>(points.size());
    for (std::int64_t i = lo; i < hi; ++i) {
        for (int j = std::max<int>(static_cast<int>(i) + 1, j_begin); j < n; ++j) {
            const double d = geodesic_miles(points[i], points[j], &fell);
            if (fell) ++fallbacks;
            if (d <= cfg.epsilon) {
                out.push_back({static_cast<int>(i), j, similarity(d, cfg)});
            }
        }
    }
}

// Shared edge-scan driver. Finds all pairs (i, j) with i < j, i < i_limit,
// j >= j_begin, distance <= epsilon. For a plain build i_limit = n and
// j_begin = 0; for test attachment i_limit = train_count and j_begin =
// train_count, which yields exactly the train-test pairs.
std::vector<PairHit> scan_edges(std::span<const GeoPoint> points, const KernelConfig& cfg,
                                std::int64_t i_limit, int j_begin, int& fallbacks) {
    const auto n = static_cast<std::int64_t>(points.size());
    std::vector<PairHit> hits;

    const bool use_grid = n >= kBruteForceThreshold;
    std::unordered_map<std::int64_t, std::vector<int>> grid;
    double cell_lat = 1.0, cell_lon = 1.0;
    if (use_grid) {
        double max_abs_lat = 0.0;
        for (const auto& p : points) max_abs_lat = std::max(max_abs_lat, std::abs(p.lat));
        // clamp so polar data degrades to few, huge cells instead of dividing by ~0
        const double cos_lat = std::max(0.05, std::cos(max_abs_lat * 3.141592653589793 / 180.0));
        cell_lat = cfg.epsilon / kMinMilesPerDegLat;
        cell_lon = cfg.epsilon / (kMinMilesPerDegLonEq * cos_lat);
        for (int j = j_begin; j < n; ++j) {
            const int cx = static_cast<int>(std::floor(points[j].lon / cell_lon));
            const int cy = static_cast<int>(std::floor(points[j].lat / cell_lat));
            grid[cell_key(cx, cy)].push_back(j);
        }
        for (auto& [k, v] : grid) std::sort(v.begin(), v.end());
    }

    const std::int64_t chunk = std::max<std::int64_t>(64, i_limit / (4 * thread_count() + 1));
    const std::int64_t n_chunks = i_limit > 0 ? (i_limit + chunk - 1) / chunk : 0;
    std::vector<std::vector<PairHit>> per_chunk(n_chunks);
    std::vector<int> per_chunk_fallbacks(n_chunks, 0);

    parallel_for_chunks(i_limit, chunk, [&](std::int64_t lo, std::int64_t hi, std::int64_t c) {
        if (use_grid) {
            scan_pairs_grid(points, cfg, lo, hi, grid, cell_lat, cell_lon, per_chunk[c],
                            per_chunk_fallbacks[c]);
        } else {
            scan_pairs_brute(points, cfg, lo, hi, j_begin, per_chunk[c], per_chunk_fallbacks[c]);
        }
    });

    for (std::int64_t c = 0; c < n_chunks; ++c) {
        hits.insert(hits.end(), per_chunk[c].begin(), per_chunk[c].end());
        fallbacks += per_chunk_fallbacks[c];
    }
    // grid scan emits pairs in bucket order; normalize
    std::sort(hits.begin(), hits.end(), [](const PairHit& a, const PairHit& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    return hits;
}

}  // namespace

int SimilarityGraph::sample_neighbor(int i, std::mt19937_64& rng) const {
    const auto& cum = cum_[i];
    const double total = cum.back();
    std::uniform_real_distribution<double> dist(0.0, total);
    const double u = dist(rng);
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    auto k = static_cast<std::size_t>(it - cum.begin());
    if (k >= adj_[i].size()) k = adj_[i].size() - 1;
    return adj_[i][k].to;
}

std::size_t SimilarityGraph::edge_count() const {
    std::size_t directed = 0;
    for (const auto& a : adj_) directed += a.size();
    return directed / 2;
}

std::vector<int> SimilarityGraph::isolated_nodes() const {
    std::vector<int> iso;
    for (int i = 0; i < node_count(); ++i) {
        if (adj_[i].empty()) iso.push_back(i);
    }
    return iso;
}

void SimilarityGraph::finalize() {
    cum_.assign(adj_.size(), {});
    for (std::size_t i = 0; i < adj_.size(); ++i) {
        auto& a = adj_[i];
        std::sort(a.begin(), a.end(), [](const Neighbor& x, const Neighbor& y) { return x.to < y.to; });
        cum_[i].reserve(a.size());
        double run = 0.0;
        for (const auto& nb : a) {
            run += nb.weight;
            cum_[i].push_back(run);
        }
    }
}

SimilarityGraph build_graph(std::span<const GeoPoint> points, const KernelConfig& cfg,
                            GraphBuildReport* report) {
    cfg.validate();
    if (points.size() < 2) throw InvalidInput("build_graph: need at least 2 points");
    for (const auto& p : points) validate_point(p);

    int fallbacks = 0;
    const auto hits = scan_edges(points, cfg, static_cast<std::int64_t>(points.size()), 0, fallbacks);

    SimilarityGraph g;
    g.points_.assign(points.begin(), points.end());
    g.train_count_ = static_cast<int>(points.size());
    g.adj_.assign(points.size(), {});
    for (const auto& h : hits) {
        g.adj_[h.i].push_back({h.j, h.weight});
        g.adj_[h.j].push_back({h.i, h.weight});
    }
    g.finalize();

    if (report) *report = summarize_graph(g, fallbacks);
    return g;
}

SimilarityGraph attach_test_nodes(const SimilarityGraph& g, std::span<const GeoPoint> test_points,
                                  const KernelConfig& cfg, GraphBuildReport* report) {
    cfg.validate();
    if (test_points.empty()) throw InvalidInput("attach_test_nodes: empty test set");
    for (const auto& p : test_points) validate_point(p);

    SimilarityGraph ext;
    ext.points_ = g.points_;
    ext.points_.insert(ext.points_.end(), test_points.begin(), test_points.end());
    ext.train_count_ = g.node_count();
    ext.adj_ = g.adj_;
    ext.adj_.resize(ext.points_.size());

    // scan train x test pairs only; test-test edges are forbidden by
    // construction (every test sequence must contain exactly one test node)
    int fallbacks = 0;
    const auto hits =
        scan_edges(ext.points_, cfg, g.node_count(), g.node_count(), fallbacks);
    for (const auto& h : hits) {
        ext.adj_[h.i].push_back({h.j, h.weight});
        ext.adj_[h.j].push_back({h.i, h.weight});
    }
    ext.finalize();

    if (report) *report = summarize_graph(ext, fallbacks);
    return ext;
}

SimilarityGraph graph_from_edges(std::vector<GeoPoint> points, int train_count,
                                 const std::vector<std::vector<Neighbor>>& adj) {
    if (adj.size() != points.size()) throw InvalidInput("graph_from_edges: size mismatch");
    SimilarityGraph g;
    g.points_ = std::move(points);
    g.train_count_ = train_count;
    g.adj_ = adj;
    g.finalize();
    return g;
}

GraphBuildReport summarize_graph(const SimilarityGraph& g, int distance_fallbacks) {
    GraphBuildReport r;
    r.node_count = g.node_count();
    r.edge_count = g.edge_count();
    r.isolated = g.isolated_nodes();
    r.mean_degree = g.node_count() > 0
                        ? 2.0 * static_cast<double>(r.edge_count) / g.node_count()
                        : 0.0;
    r.distance_fallbacks = distance_fallbacks;
    return r;
}

}  // namespace gwr
