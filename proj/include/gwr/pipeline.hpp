#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gwr/features.hpp"
#include "gwr/graph.hpp"
#include "gwr/net.hpp"
#include "gwr/walks.hpp"

namespace gwr {

struct TrainConfig {
    double split_fraction = 0.8;
    std::int64_t num_sequences = 200000;  // M training walks
    int walk_length = 10;                 // L
    int batch_size = 1024;
    int max_steps = 5000;
    int hidden1 = 400;
    int hidden2 = 200;
    KernelConfig kernel;                  // sigma 0.5 mi, epsilon 5 mi
    RmsPropConfig optimizer;
    double clip_norm = 5.0;               // global-norm gradient clip; <= 0 disables
    double l2 = 0.0;                      // optional weight decay, off by default
    std::uint64_t seed = 1;

    // stop when the mean loss over the last window differs from the mean over
    // the previous window by less than conv_rel_tol, relatively
    double conv_rel_tol = 1e-5;
    int conv_window = 50;

    // when > 0, training stops once MAPE on a fixed probe of training walks
    // drops below this (checked every probe_every steps)
    double target_train_mape = -1.0;
    int probe_every = 100;

    // early stopping on a validation slice of the TRAINING houses (never the
    // test set). 0 disables; the bench turns it on. The model is fitted on
    // the remaining houses only and the best-validation snapshot is returned.
    double val_fraction = 0.0;
    int val_per_house = 20;  // sequences per validation house
    int val_every = 100;     // steps between validation evaluations
    int val_patience = 5;    // evaluations without improvement before stopping

    // sequences per forward/backward chunk; fixed boundaries keep gradient
    // reduction order independent of the worker count
    int chunk_size = 64;

    void validate() const;
};

// Flat JSON with keys mirroring the struct; missing keys keep defaults.
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

struct TrainLogRow {
    std::int64_t step;
    double loss;
    double wall_ms;
};

// Everything predict() needs beyond the raw model: normalization statistics
// fitted on training data only, and the training graph.
struct TrainedPipeline {
    BlstmModel model;
    FeatureStats feature_stats;
    double price_mean = 0.0;
    double price_std = 1.0;
    SimilarityGraph graph;  // training houses only, same order as the train vector
    TrainConfig config;
};

struct TrainResult {
    TrainedPipeline pipeline;
    std::vector<TrainLogRow> log;
    GraphBuildReport graph_report;
    std::int64_t steps_run = 0;
    double final_loss = 0.0;
    // houses the pipeline was actually fitted on: the input list, minus the
    // validation slice when val_fraction > 0. predict() must be given this
    // list, since graph node indices refer to it.
    std::vector<House> houses_used;
    double best_val_mape = -1.0;
    std::int64_t best_val_step = -1;
};

// Uniform random split; test houses come back with the taint flag set, and
// every training-only stage checks that flag. Sizes floor(n*f) / remainder.
std::pair<std::vector<House>, std::vector<House>> split(const std::vector<House>& houses,
                                                        double fraction, std::uint64_t seed);

// Throws LeakageError if any record is tainted. Called by every
// training-only stage; `stage` names the call site in the error.
void require_untainted(std::span<const House> houses, const char* stage);

// Normalization-fit stage: guards against tainted records, then returns the
// z-scoring stats plus the normalized feature matrix (column per house).
struct FittedFeatures {
    FeatureStats stats;
    Eigen::MatrixXd columns;  // D x n, z-scored
};
FittedFeatures fit_feature_stats(const std::vector<House>& train_houses);

// Batch-assembly stage: gathers walk positions into sequence tensors.
// Checks the taint flag of every referenced house, which is the live
// leakage guard for training batches.
struct SequenceBatch {
    std::vector<Eigen::MatrixXd> xs;  // T of D x B
    Eigen::MatrixXd targets;          // T x B
};
SequenceBatch assemble_training_batch(const std::vector<WalkSequence>& walks,
                                      std::span<const std::int64_t> idx,
                                      const Eigen::MatrixXd& feature_columns,
                                      const Eigen::VectorXd& z_prices,
                                      const std::vector<House>& taint_source);

// The deterministic fit/validation partition used when val_fraction > 0;
// second element is empty otherwise. Keyed by (cfg.seed, kValSplit), so a
// checkpoint consumer can reproduce exactly which houses the model saw.
std::pair<std::vector<House>, std::vector<House>> split_validation(
    const std::vector<House>& train_houses, const TrainConfig& cfg);

// Builds the graph over training houses only, generates M walks, assembles
// (feature, z-scored price) sequence pairs, and runs mini-batch RMSProp until
// max_steps or convergence. Deterministic for a fixed seed at any thread
// count.
TrainResult train(const std::vector<House>& train_houses, const TrainConfig& cfg);

// MAPE over all positions of a probe of training walks (diagnostic;
// drives the overfit stop rule).
double training_mape(const TrainedPipeline& tp, const std::vector<House>& train_houses,
                     std::int64_t probe_walks = 500);

struct PredictionSummary {
    std::string id;
    std::vector<double> predictions;  // de-standardized, one per kept sequence
    double mean = 0.0;
    double stddev = 0.0;   // population std (divide by n)
    double best = 0.0;     // diagnostic: element closest to truth
    double truth = 0.0;
    int n_sequences = 0;   // 0 for fallback houses
    bool flagged = false;  // isolated test node: fallback to training mean
};

// Attaches test nodes to the training graph, generates per_test sequences per
// test house, reads the network output at the test position only, and
// de-standardizes. Isolated test houses fall back to the training mean price
// and are flagged.
std::vector<PredictionSummary> predict(const TrainedPipeline& tp,
                                       const std::vector<House>& train_houses,
                                       const std::vector<House>& test_houses, int per_test);

struct Metrics {
    double mae = 0.0;
    double mape = 0.0;  // fraction; report as percent
};

enum class EvalMode { Average, Best };

// MAE = (1/N) sum |t - p|, MAPE = (1/N) sum |t - p| / t over test houses,
// with p the per-house mean (Average) or the diagnostic best (Best).
Metrics evaluate(std::span<const PredictionSummary> summaries, EvalMode mode);

struct GroupMetrics {
    int index = 0;  // 0 = smallest prediction std
    int n = 0;
    Metrics metrics;
};

// Sorts houses by sample std (divide by n-1) of their predictions, stable on
// ties, and splits into k groups (remainder joins the last). Average mode.
std::vector<GroupMetrics> confidence_groups(std::span<const PredictionSummary> summaries,
                                            int k = 3);

// Sample std used for grouping, from the stored population std and count.
double grouping_std(const PredictionSummary& s);

// predictions.csv: "id,truth,mean,std,n_sequences,flagged" (+",best" when
// diagnostic_best). Values round-trip exactly.
void save_predictions_csv(const std::string& path, std::span<const PredictionSummary> summaries,
                          bool diagnostic_best = false);
std::vector<PredictionSummary> load_predictions_csv(const std::string& path);

void save_train_log_csv(const std::string& path, std::span<const TrainLogRow> log);

}  // namespace gwr
