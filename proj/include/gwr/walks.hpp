#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gwr/graph.hpp"

namespace gwr {

struct WalkConfig {
    int length = 10;                  // L, nodes per sequence
    std::int64_t num_sequences = 200000;  // M
    std::uint64_t seed = 1;

    void validate() const;  // throws InvalidInput (L >= 2, M >= 1)
};

struct WalkSequence {
    std::vector<int> nodes;
    int test_position = -1;  // index into nodes, or -1 for training walks

    bool has_test() const { return test_position >= 0; }
};

// One transition of the walk law: moves from `node` to a neighbor drawn with
// probability weight / (sum of neighbor weights).
int sample_step(const SimilarityGraph& g, int node, std::mt19937_64& rng);

// Generates cfg.num_sequences random walks of length cfg.length. The root is
// drawn uniformly among nodes with at least one neighbor; isolated nodes are
// never visited. Each sequence is produced from its own RNG stream keyed by
// (seed, sequence index), so the output is independent of any parallel
// schedule. Throws InvalidInput if the graph has no edges.
std::vector<WalkSequence> random_walks(const SimilarityGraph& g, const WalkConfig& cfg);

struct TestWalkReport {
    std::int64_t requested = 0;
    std::int64_t generated = 0;
    std::vector<int> isolated;  // test nodes with no neighbors: zero sequences
    std::vector<int> short_of;  // test nodes where rejection produced < per_test
};

// For every non-isolated test node of an extended graph, generates per_test
// sequences containing that node exactly once and no other test node.
//
// Sampling starts at the test node and extends in both directions: a prefix
// walk and a suffix walk of total length L-1, split drawn uniformly, so the
// test position is uniform over [0, L). Any walk touching a test node is
// rejected and redrawn, up to 1000 attempts per sequence; nodes that cannot
// fill their quota are reported rather than failing the run.
std::vector<WalkSequence> test_sequences(const SimilarityGraph& extended, int per_test,
                                         const WalkConfig& cfg, TestWalkReport* report = nullptr);

// Line-oriented text format: comma-separated node ids, '*' suffix on the test
// position (e.g. "12,7,44*,3").
void save_walks(const std::string& path, const std::vector<WalkSequence>& walks);
std::vector<WalkSequence> load_walks(const std::string& path);

}  // namespace gwr
