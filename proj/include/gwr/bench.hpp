#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "gwr/lasso.hpp"
#include "gwr/pipeline.hpp"
#include "gwr/synth.hpp"

namespace gwr {

// End-to-end synthetic benchmark: generate a city, split, train the B-LSTM,
// predict with the averaging protocol, and compare against the LASSO and
// global-mean baselines. Training defaults here are sized for desk-scale
// runs (minutes, not hours); the full-scale settings remain available
// through TrainConfig.
struct BenchConfig {
    SynthConfig synth;
    TrainConfig train;
    int per_test = 100;
    int groups = 3;
    bool diagnostic_best = false;
    std::uint64_t seed = 1;  // master seed; all stage seeds derive from it

    BenchConfig();  // desk-scale training defaults

    void apply_seed();  // propagates the master seed into stages
};

struct BenchResult {
    Metrics blstm_avg;
    Metrics blstm_best;  // diagnostic
    Metrics lasso;
    Metrics global_mean;
    std::vector<GroupMetrics> groups;
    double lasso_lambda = 0.0;
    int n_test = 0;
    int n_flagged = 0;
    std::int64_t train_steps = 0;
    double train_final_loss = 0.0;
    std::vector<PredictionSummary> summaries;
    nlohmann::ordered_json timings_ms;
};

// Pure in-memory run (used by tests); identical numbers to run_bench_dir.
BenchResult run_bench(const BenchConfig& cfg);

// Runs the benchmark and writes every artifact into out_dir: houses.csv,
// features.bin, truth.json, graph.json, model.ckpt, training_log.csv,
// predictions.csv, metrics.json, baselines.json, and manifest.json (written
// last, atomically).
BenchResult run_bench_dir(const BenchConfig& cfg, const std::string& out_dir);

// metrics.json payload for a set of summaries: {mode, mae, mape_percent,
// n_houses, n_flagged, per_group: [...]}.
nlohmann::ordered_json metrics_json(std::span<const PredictionSummary> summaries, EvalMode mode,
                                    int groups, bool diagnostic_best = false);

nlohmann::ordered_json bench_config_json(const BenchConfig& cfg);
BenchConfig bench_config_from_json(const nlohmann::ordered_json& j);

}  // namespace gwr
