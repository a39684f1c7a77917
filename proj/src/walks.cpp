#include "gwr/walks.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gwr/errors.hpp"
#include "gwr/parallel.hpp"
#include "gwr/rng.hpp"

namespace gwr {

namespace {
constexpr int kMaxAttemptsPerSequence = 1000;
}

void WalkConfig::validate() const {
    if (length < 2) throw InvalidInput("walk length must be >= 2");
    if (num_sequences < 1) throw InvalidInput("num_sequences must be >= 1");
}

int sample_step(const SimilarityGraph& g, int node, std::mt19937_64& rng) {
    if (g.degree(node) == 0) throw InvalidInput("sample_step: node has no neighbors");
    return g.sample_neighbor(node, rng);
}

std::vector<WalkSequence> random_walks(const SimilarityGraph& g, const WalkConfig& cfg) {
    cfg.validate();
    std::vector<int> walkable;
    for (int i = 0; i < g.node_count(); ++i) {
        if (g.degree(i) > 0) walkable.push_back(i);
    }
    if (walkable.empty()) throw InvalidInput("random_walks: graph has no edges");

    std::vector<WalkSequence> out(cfg.num_sequences);
    parallel_for_chunks(cfg.num_sequences, 256, [&](std::int64_t lo, std::int64_t hi, std::int64_t) {
        for (std::int64_t k = lo; k < hi; ++k) {
            auto rng = rng::stream(cfg.seed, rng::kWalk, static_cast<std::uint64_t>(k));
            std::uniform_int_distribution<std::size_t> root_dist(0, walkable.size() - 1);
            WalkSequence& w = out[k];
            w.nodes.reserve(cfg.length);
            int cur = walkable[root_dist(rng)];
            w.nodes.push_back(cur);
            while (static_cast<int>(w.nodes.size()) < cfg.length) {
                cur = g.sample_neighbor(cur, rng);
                w.nodes.push_back(cur);
            }
        }
    });
    return out;
}

namespace {

// Walks `steps` nodes away from `start`, appending to `path`. Returns false
// (rejection) if the walk enters any test node or gets stuck on a node whose
// only continuations are test nodes.
bool grow(const SimilarityGraph& g, int start, int steps, std::mt19937_64& rng,
          std::vector<int>& path) {
    int cur = start;
    for (int s = 0; s < steps; ++s) {
        if (g.degree(cur) == 0) return false;
        const int nxt = g.sample_neighbor(cur, rng);
        if (g.is_test_node(nxt)) return false;
        path.push_back(nxt);
        cur = nxt;
    }
    return true;
}

}  // namespace

std::vector<WalkSequence> test_sequences(const SimilarityGraph& extended, int per_test,
                                         const WalkConfig& cfg, TestWalkReport* report) {
    cfg.validate();
    if (per_test < 1) throw InvalidInput("test_sequences: per_test must be >= 1");
    const int n_test = extended.node_count() - extended.train_count();
    if (n_test <= 0) throw InvalidInput("test_sequences: graph has no test nodes");

    TestWalkReport rep;
    rep.requested = static_cast<std::int64_t>(n_test) * per_test;

    // slot q*per_test+s holds sequence s of test node q; empty = not produced
    std::vector<WalkSequence> slots(rep.requested);
    std::vector<std::uint8_t> isolated(n_test, 0);

    parallel_for_chunks(n_test, 1, [&](std::int64_t lo, std::int64_t hi, std::int64_t) {
        for (std::int64_t q = lo; q < hi; ++q) {
            const int node = extended.train_count() + static_cast<int>(q);
            if (extended.degree(node) == 0) {
                isolated[q] = 1;
                continue;
            }
            for (int s = 0; s < per_test; ++s) {
                auto rng = rng::stream(cfg.seed, rng::kTestWalk,
                                       static_cast<std::uint64_t>(q) * per_test + s);
                std::uniform_int_distribution<int> split(0, cfg.length - 1);
                for (int attempt = 0; attempt < kMaxAttemptsPerSequence; ++attempt) {
                    const int prefix_len = split(rng);
                    const int suffix_len = cfg.length - 1 - prefix_len;
                    std::vector<int> prefix, suffix;
                    if (!grow(extended, node, prefix_len, rng, prefix)) continue;
                    if (!grow(extended, node, suffix_len, rng, suffix)) continue;
                    WalkSequence w;
                    w.nodes.reserve(cfg.length);
                    w.nodes.insert(w.nodes.end(), prefix.rbegin(), prefix.rend());
                    w.test_position = static_cast<int>(w.nodes.size());
                    w.nodes.push_back(node);
                    w.nodes.insert(w.nodes.end(), suffix.begin(), suffix.end());
                    slots[q * per_test + s] = std::move(w);
                    break;
                }
            }
        }
    });

    std::vector<WalkSequence> out;
    out.reserve(slots.size());
    for (int q = 0; q < n_test; ++q) {
        if (isolated[q]) {
            rep.isolated.push_back(extended.train_count() + q);
            continue;
        }
        int got = 0;
        for (int s = 0; s < per_test; ++s) {
            auto& w = slots[static_cast<std::size_t>(q) * per_test + s];
            if (!w.nodes.empty()) {
                out.push_back(std::move(w));
                ++got;
            }
        }
        if (got < per_test) rep.short_of.push_back(extended.train_count() + q);
    }
    rep.generated = static_cast<std::int64_t>(out.size());
    if (report) *report = rep;
    return out;
}

void save_walks(const std::string& path, const std::vector<WalkSequence>& walks) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    for (const auto& w : walks) {
        for (std::size_t i = 0; i < w.nodes.size(); ++i) {
            if (i) f << ',';
            f << w.nodes[i];
            if (static_cast<int>(i) == w.test_position) f << '*';
        }
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<WalkSequence> load_walks(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<WalkSequence> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        WalkSequence w;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            bool test = !tok.empty() && tok.back() == '*';
            if (test) tok.pop_back();
            try {
                w.nodes.push_back(std::stoi(tok));
            } catch (const std::exception&) {
                throw IoError("bad walk token '" + tok + "' in " + path);
            }
            if (test) w.test_position = static_cast<int>(w.nodes.size()) - 1;
        }
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace gwr
