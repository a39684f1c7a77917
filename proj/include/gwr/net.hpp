#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gwr {

struct ModelDims {
    int input = 0;    // feature dimension D
    int hidden1 = 400;
    int hidden2 = 200;
};

// One LSTM gate: pre-activation = w_x x + w_h h_prev + w_c (.) c + b.
// Peepholes (w_c) are element-wise vectors; the candidate path has none
// (w_c stays empty there).
struct GateParams {
    Eigen::MatrixXd w_x;  // H x D_in
    Eigen::MatrixXd w_h;  // H x H
    Eigen::VectorXd w_c;  // H, or empty
    Eigen::VectorXd b;    // H
};

struct CellParams {
    GateParams in_g, forget_g, cand, out_g;

    int hidden() const { return static_cast<int>(in_g.b.size()); }
    int input_dim() const { return static_cast<int>(in_g.w_x.cols()); }
};

struct HeadParams {
    Eigen::RowVectorXd w;  // 1 x 2*H2
    double b = 0.0;
};

// The full parameter tree: two bidirectional layers plus the scalar output
// head. Checkpoints, gradients and optimizer state all share this shape; the
// canonical flat traversal is param_spans() below.
struct BlstmParams {
    CellParams l1_fwd, l1_bwd, l2_fwd, l2_bwd;
    HeadParams head;

    static BlstmParams zeros(const ModelDims& dims);
    std::size_t param_count() const;
    void set_zero();
    bool all_finite() const;
};

// Flat views over every parameter in the fixed serialization order:
// layer1-fwd, layer1-bwd, layer2-fwd, layer2-bwd (per cell: gates i, f, c, o,
// each as w_x, w_h, w_c [absent for c], b), then head w, head b. Matrices are
// exposed in Eigen's default column-major storage order.
std::vector<std::pair<double*, std::size_t>> param_spans(BlstmParams& p);
std::vector<std::pair<const double*, std::size_t>> param_spans(const BlstmParams& p);

struct BlstmModel {
    ModelDims dims;
    BlstmParams params;
    std::uint64_t init_seed = 0;
};

// Cell weights ~ U(-r, r) with r = 1/sqrt(fan_in); forget-gate biases start
// at 1 so memory survives the first updates, all other biases at 0. The
// output head starts at zero, so a model trained 0 steps predicts the
// head-bias constant.
BlstmModel init_model(const ModelDims& dims, std::uint64_t seed);

// --- forward / backward --------------------------------------------------
//
// Batched interface: a batch of B equal-length sequences is a vector of T
// matrices, each D x B (column b = input for sequence b at that step).

// Single cell step on vectors (B = 1 convenience used by tests and docs):
//   i = sig(Wx x + Wh h + wc.c_prev + b), f likewise,
//   c = f.c_prev + i.tanh(Wx x + Wh h + b),
//   o = sig(Wx x + Wh h + wc.c + b), h = o.tanh(c).
void lstm_step(const CellParams& cell, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
               const Eigen::VectorXd& c_prev, Eigen::VectorXd& h_out, Eigen::VectorXd& c_out);

struct DirCache {
    // per processed step: gate activations, cell state, tanh(cell), hidden
    std::vector<Eigen::MatrixXd> i, f, g, o, c, tc, h;
};

struct ForwardCache {
    int steps = 0;
    int batch = 0;
    std::vector<Eigen::MatrixXd> x;  // layer-1 inputs, T of D x B
    std::vector<Eigen::MatrixXd> u;  // layer-2 inputs, T of 2H1 x B
    std::vector<Eigen::MatrixXd> v;  // head inputs, T of 2H2 x B
    Eigen::MatrixXd preds;           // T x B
    DirCache l1f, l1b, l2f, l2b;
};

// Runs both directions of both layers and the head. Returns a T x B matrix
// of predictions; fills *cache when given (required for backward).
Eigen::MatrixXd blstm_forward(const BlstmModel& model, const std::vector<Eigen::MatrixXd>& xs,
                              ForwardCache* cache = nullptr);

// Training loss: mean over sequences of the UNAVERAGED sum of squared
// residuals over positions, L = (1/N) sum_n sum_t (pred - target)^2.
double loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

// Reverse-mode gradients of `loss` through head, both layers, both
// directions and the peepholes. loss_sequences is the N of the 1/N factor;
// pass the full batch size when accumulating over chunks of a larger batch.
BlstmParams backward(const BlstmModel& model, const ForwardCache& cache,
                     const Eigen::MatrixXd& targets, int loss_sequences);

double global_norm(const BlstmParams& grads);
// Scales grads so the global L2 norm is at most max_norm.
void clip_by_global_norm(BlstmParams& grads, double max_norm);

// --- RMSProp ---------------------------------------------------------------

struct RmsPropConfig {
    double rho = 0.9;
    double lr = 1e-3;
    double delta = 1e-8;
};

struct RmsPropState {
    BlstmParams acc;  // running mean square per parameter
    std::int64_t step = 0;
};

RmsPropState make_rmsprop_state(const ModelDims& dims);

// acc <- rho acc + (1-rho) g^2 ; p <- p - lr g / sqrt(acc + delta)
void rmsprop_step(BlstmParams& params, const BlstmParams& grads, RmsPropState& state,
                  const RmsPropConfig& cfg);

// --- checkpoint ------------------------------------------------------------
//
// Single file: magic "GWRC1", u32 manifest length, manifest JSON, then every
// parameter as little-endian float64 in param_spans() order. The manifest
// carries {version, dims, seed, step, rmsprop, param_count} plus any extra
// keys the caller wants round-tripped (the pipeline stores normalization
// stats and split settings there).
void save_checkpoint(const std::string& path, const BlstmModel& model, std::int64_t step,
                     const RmsPropConfig& opt, const nlohmann::ordered_json& extra = {});
BlstmModel load_checkpoint(const std::string& path, nlohmann::ordered_json* manifest = nullptr);

}  // namespace gwr
