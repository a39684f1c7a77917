#include "gwr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "gwr/errors.hpp"
#include "gwr/parallel.hpp"
#include "gwr/rng.hpp"

namespace gwr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw InvalidInput("split_fraction must be in (0, 1)");
    }
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (num_sequences < 1) throw InvalidInput("num_sequences must be >= 1");
    if (walk_length < 2) throw InvalidInput("walk_length must be >= 2");
    if (max_steps < 0) throw InvalidInput("max_steps must be >= 0");
    if (hidden1 < 1 || hidden2 < 1) throw InvalidInput("hidden sizes must be >= 1");
    if (chunk_size < 1) throw InvalidInput("chunk_size must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 0.5) {
        throw InvalidInput("val_fraction must be in [0, 0.5)");
    }
    if (val_fraction > 0.0 && (val_per_house < 1 || val_every < 1 || val_patience < 1)) {
        throw InvalidInput("validation settings must be positive");
    }
    kernel.validate();
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["split_fraction"] = cfg.split_fraction;
    j["num_sequences"] = cfg.num_sequences;
    j["walk_length"] = cfg.walk_length;
    j["batch_size"] = cfg.batch_size;
    j["max_steps"] = cfg.max_steps;
    j["hidden1"] = cfg.hidden1;
    j["hidden2"] = cfg.hidden2;
    j["sigma"] = cfg.kernel.sigma;
    j["epsilon"] = cfg.kernel.epsilon;
    j["kernel_form"] =
        cfg.kernel.form == KernelForm::PaperLiteral ? "paper_literal" : "squared_exponential";
    j["rho"] = cfg.optimizer.rho;
    j["lr"] = cfg.optimizer.lr;
    j["delta"] = cfg.optimizer.delta;
    j["clip_norm"] = cfg.clip_norm;
    j["l2"] = cfg.l2;
    j["seed"] = cfg.seed;
    j["conv_rel_tol"] = cfg.conv_rel_tol;
    j["conv_window"] = cfg.conv_window;
    j["target_train_mape"] = cfg.target_train_mape;
    j["probe_every"] = cfg.probe_every;
    j["val_fraction"] = cfg.val_fraction;
    j["val_per_house"] = cfg.val_per_house;
    j["val_every"] = cfg.val_every;
    j["val_patience"] = cfg.val_patience;
    j["chunk_size"] = cfg.chunk_size;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
    TrainConfig cfg;
    try {
        cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
        cfg.num_sequences = j.value("num_sequences", cfg.num_sequences);
        cfg.walk_length = j.value("walk_length", cfg.walk_length);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.max_steps = j.value("max_steps", cfg.max_steps);
        cfg.hidden1 = j.value("hidden1", cfg.hidden1);
        cfg.hidden2 = j.value("hidden2", cfg.hidden2);
        cfg.kernel.sigma = j.value("sigma", cfg.kernel.sigma);
        cfg.kernel.epsilon = j.value("epsilon", cfg.kernel.epsilon);
        const std::string form = j.value("kernel_form", std::string("squared_exponential"));
        if (form == "paper_literal") {
            cfg.kernel.form = KernelForm::PaperLiteral;
        } else if (form == "squared_exponential") {
            cfg.kernel.form = KernelForm::SquaredExponential;
        } else {
            throw InvalidInput("unknown kernel_form: " + form);
        }
        cfg.optimizer.rho = j.value("rho", cfg.optimizer.rho);
        cfg.optimizer.lr = j.value("lr", cfg.optimizer.lr);
        cfg.optimizer.delta = j.value("delta", cfg.optimizer.delta);
        cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
        cfg.l2 = j.value("l2", cfg.l2);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.conv_rel_tol = j.value("conv_rel_tol", cfg.conv_rel_tol);
        cfg.conv_window = j.value("conv_window", cfg.conv_window);
        cfg.target_train_mape = j.value("target_train_mape", cfg.target_train_mape);
        cfg.probe_every = j.value("probe_every", cfg.probe_every);
        cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
        cfg.val_per_house = j.value("val_per_house", cfg.val_per_house);
        cfg.val_every = j.value("val_every", cfg.val_every);
        cfg.val_patience = j.value("val_patience", cfg.val_patience);
        cfg.chunk_size = j.value("chunk_size", cfg.chunk_size);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad train config: ") + e.what());
    }
    return cfg;
}

std::pair<std::vector<House>, std::vector<House>> split(const std::vector<House>& houses,
                                                        double fraction, std::uint64_t seed) {
    if (houses.size() < 10) throw InvalidInput("split: need at least 10 houses");
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("split: fraction in (0,1)");

    std::vector<std::size_t> order(houses.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = rng::stream(seed, rng::kSplit);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = static_cast<std::size_t>(std::floor(houses.size() * fraction));
    std::pair<std::vector<House>, std::vector<House>> out;
    out.first.reserve(n_train);
    out.second.reserve(houses.size() - n_train);
    for (std::size_t k = 0; k < order.size(); ++k) {
        House h = houses[order[k]];
        h.tainted = k >= n_train;
        (k < n_train ? out.first : out.second).push_back(std::move(h));
    }
    return out;
}

void require_untainted(std::span<const House> houses, const char* stage) {
    for (const auto& h : houses) {
        if (h.tainted) {
            throw LeakageError(std::string(stage) + ": test house '" + h.id +
                               "' reached a training-only stage");
        }
    }
}

namespace {

// column j = features of house j, z-scored with training stats
MatrixXd feature_columns(const std::vector<House>& houses, const FeatureStats& stats) {
    if (houses.empty()) throw InvalidInput("feature_columns: no houses");
    const auto dim = houses.front().features.size();
    MatrixXd rows(houses.size(), dim);
    for (std::size_t i = 0; i < houses.size(); ++i) {
        if (houses[i].features.size() != dim) {
            throw InvalidInput("feature dimension mismatch at house " + houses[i].id);
        }
        rows.row(i) = houses[i].features.transpose();
    }
    normalize_apply(rows, stats);
    return rows.transpose();
}

// gather() without taint checks, for walks over non-training data
SequenceBatch gather_unchecked(const std::vector<WalkSequence>& walks,
                               std::span<const std::int64_t> idx, const MatrixXd& feat_cols,
                               const VectorXd& z_prices) {
    const int steps = static_cast<int>(walks[idx[0]].nodes.size());
    const auto batch = static_cast<Eigen::Index>(idx.size());
    SequenceBatch b;
    b.xs.assign(steps, MatrixXd(feat_cols.rows(), batch));
    b.targets.resize(steps, batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        const auto& w = walks[idx[j]];
        for (int t = 0; t < steps; ++t) {
            const int node = w.nodes[t];
            b.xs[t].col(j) = feat_cols.col(node);
            b.targets(t, j) = z_prices[node];
        }
    }
    return b;
}

void add_l2(BlstmParams& grads, const BlstmParams& params, double l2) {
    auto add_gate = [l2](GateParams& g, const GateParams& p) {
        g.w_x += 2.0 * l2 * p.w_x;
        g.w_h += 2.0 * l2 * p.w_h;
        if (g.w_c.size() > 0) g.w_c += 2.0 * l2 * p.w_c;
    };
    auto add_cell = [&](CellParams& g, const CellParams& p) {
        add_gate(g.in_g, p.in_g);
        add_gate(g.forget_g, p.forget_g);
        add_gate(g.cand, p.cand);
        add_gate(g.out_g, p.out_g);
    };
    add_cell(grads.l1_fwd, params.l1_fwd);
    add_cell(grads.l1_bwd, params.l1_bwd);
    add_cell(grads.l2_fwd, params.l2_fwd);
    add_cell(grads.l2_bwd, params.l2_bwd);
    grads.head.w += 2.0 * l2 * params.head.w;
}

void accumulate(BlstmParams& into, const BlstmParams& from) {
    auto dst = param_spans(into);
    auto src = param_spans(from);
    for (std::size_t k = 0; k < dst.size(); ++k) {
        for (std::size_t i = 0; i < dst[k].second; ++i) dst[k].first[i] += src[k].first[i];
    }
}

double mape_on_walks(const BlstmModel& model, const std::vector<WalkSequence>& walks,
                     std::int64_t count, const MatrixXd& feat_cols, const VectorXd& z_prices,
                     double price_mean, double price_std, int chunk_size) {
    count = std::min<std::int64_t>(count, static_cast<std::int64_t>(walks.size()));
    std::vector<std::int64_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);

    const std::int64_t n_chunks = (count + chunk_size - 1) / chunk_size;
    std::vector<double> err_sum(n_chunks, 0.0);
    std::vector<std::int64_t> err_n(n_chunks, 0);
    parallel_for_chunks(count, chunk_size, [&](std::int64_t lo, std::int64_t hi, std::int64_t c) {
        auto b = gather_unchecked(walks, std::span<const std::int64_t>(idx).subspan(lo, hi - lo),
                                  feat_cols, z_prices);
        const MatrixXd preds = blstm_forward(model, b.xs);
        for (Eigen::Index t = 0; t < preds.rows(); ++t) {
            for (Eigen::Index j = 0; j < preds.cols(); ++j) {
                const double truth = b.targets(t, j) * price_std + price_mean;
                const double pred = preds(t, j) * price_std + price_mean;
                err_sum[c] += std::abs(truth - pred) / truth;
                ++err_n[c];
            }
        }
    });
    double total = 0.0;
    std::int64_t n = 0;
    for (std::int64_t c = 0; c < n_chunks; ++c) total += err_sum[c], n += err_n[c];
    return n > 0 ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

FittedFeatures fit_feature_stats(const std::vector<House>& train_houses) {
    if (train_houses.empty()) throw InvalidInput("fit_feature_stats: no houses");
    require_untainted(train_houses, "normalization fit");
    const auto dim = train_houses.front().features.size();
    MatrixXd rows(train_houses.size(), dim);
    for (std::size_t i = 0; i < train_houses.size(); ++i) {
        if (train_houses[i].features.size() != dim) {
            throw InvalidInput("feature dimension mismatch at house " + train_houses[i].id);
        }
        rows.row(i) = train_houses[i].features.transpose();
    }
    FittedFeatures out;
    out.stats = normalize_fit(rows);
    out.columns = rows.transpose();
    return out;
}

SequenceBatch assemble_training_batch(const std::vector<WalkSequence>& walks,
                                      std::span<const std::int64_t> idx,
                                      const MatrixXd& feature_columns, const VectorXd& z_prices,
                                      const std::vector<House>& taint_source) {
    if (idx.empty()) throw InvalidInput("assemble_training_batch: empty index set");
    const int steps = static_cast<int>(walks[idx[0]].nodes.size());
    const auto batch = static_cast<Eigen::Index>(idx.size());
    SequenceBatch b;
    b.xs.assign(steps, MatrixXd(feature_columns.rows(), batch));
    b.targets.resize(steps, batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        const auto& w = walks[idx[j]];
        for (int t = 0; t < steps; ++t) {
            const int node = w.nodes[t];
            if (taint_source[node].tainted) {
                throw LeakageError("training batch: test house '" + taint_source[node].id +
                                   "' appeared in a walk");
            }
            b.xs[t].col(j) = feature_columns.col(node);
            b.targets(t, j) = z_prices[node];
        }
    }
    return b;
}

namespace {

// Validation state for early stopping: every sequence of every validation
// house pre-gathered into fixed tensors, so an evaluation is pure forwards.
struct ValProbe {
    std::vector<MatrixXd> xs;        // T of D x B over all val sequences
    std::vector<int> positions;      // per sequence: index of the val node
    std::vector<int> house_of;       // per sequence: val house ordinal
    std::vector<double> truths;      // per val house
    int n_houses = 0;

    bool empty() const { return positions.empty(); }

    double mape(const BlstmModel& model, double price_mean, double price_std,
                int chunk_size) const {
        const auto batch = static_cast<std::int64_t>(positions.size());
        std::vector<double> house_sum(n_houses, 0.0);
        std::vector<int> house_n(n_houses, 0);
        const std::int64_t n_chunks = (batch + chunk_size - 1) / chunk_size;
        std::vector<std::vector<double>> sums(n_chunks, house_sum);
        std::vector<std::vector<int>> counts(n_chunks, house_n);
        parallel_for_chunks(batch, chunk_size, [&](std::int64_t lo, std::int64_t hi,
                                                   std::int64_t c) {
            std::vector<MatrixXd> slice(xs.size());
            for (std::size_t t = 0; t < xs.size(); ++t) {
                slice[t] = xs[t].middleCols(lo, hi - lo);
            }
            const MatrixXd preds = blstm_forward(model, slice);
            for (std::int64_t j = lo; j < hi; ++j) {
                sums[c][house_of[j]] += preds(positions[j], j - lo);
                counts[c][house_of[j]] += 1;
            }
        });
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            for (int q = 0; q < n_houses; ++q) {
                house_sum[q] += sums[c][q];
                house_n[q] += counts[c][q];
            }
        }
        double total = 0.0;
        int counted = 0;
        for (int q = 0; q < n_houses; ++q) {
            // houses with no sequences fall back to the training mean
            const double pred = house_n[q] > 0
                                    ? (house_sum[q] / house_n[q]) * price_std + price_mean
                                    : price_mean;
            total += std::abs(truths[q] - pred) / truths[q];
            ++counted;
        }
        return counted > 0 ? total / counted : 0.0;
    }
};

}  // namespace

std::pair<std::vector<House>, std::vector<House>> split_validation(
    const std::vector<House>& train_houses, const TrainConfig& cfg) {
    std::pair<std::vector<House>, std::vector<House>> out;
    if (cfg.val_fraction <= 0.0) {
        out.first = train_houses;
        return out;
    }
    std::vector<std::size_t> order(train_houses.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = rng::stream(cfg.seed, rng::kValSplit);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val =
        static_cast<std::size_t>(std::floor(train_houses.size() * cfg.val_fraction));
    if (n_val == 0 || n_val >= train_houses.size()) {
        throw InvalidInput("split_validation: empty fit or validation set");
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        (k < n_val ? out.second : out.first).push_back(train_houses[order[k]]);
    }
    return out;
}

TrainResult train(const std::vector<House>& train_houses, const TrainConfig& cfg) {
    cfg.validate();
    if (train_houses.empty()) throw InvalidInput("train: empty training set");
    require_untainted(train_houses, "graph build");

    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    TrainResult res;

    // optional validation slice for early stopping, carved from the
    // TRAINING houses; the model is fitted on the rest
    auto [fit_houses, val_houses] = split_validation(train_houses, cfg);
    res.houses_used = fit_houses;

    // graph over fitted houses only
    std::vector<GeoPoint> pts;
    pts.reserve(fit_houses.size());
    for (const auto& h : fit_houses) pts.push_back(h.location);
    res.pipeline.graph = build_graph(pts, cfg.kernel, &res.graph_report);

    // normalization stats from fitted data only
    auto fitted = fit_feature_stats(fit_houses);
    res.pipeline.feature_stats = std::move(fitted.stats);
    const MatrixXd feat_cols = std::move(fitted.columns);

    VectorXd prices(fit_houses.size());
    for (std::size_t i = 0; i < fit_houses.size(); ++i) prices[i] = fit_houses[i].price;

    res.pipeline.price_mean = prices.mean();
    res.pipeline.price_std =
        std::sqrt((prices.array() - res.pipeline.price_mean).square().sum() / prices.size());
    if (res.pipeline.price_std <= 0.0) res.pipeline.price_std = 1.0;
    VectorXd z_prices = (prices.array() - res.pipeline.price_mean) / res.pipeline.price_std;

    // walks
    WalkConfig wcfg;
    wcfg.length = cfg.walk_length;
    wcfg.num_sequences = cfg.num_sequences;
    wcfg.seed = cfg.seed;
    const auto walks = random_walks(res.pipeline.graph, wcfg);

    // validation probe: attach val houses to the fit graph as pseudo-test
    // nodes and pre-gather their sequences once
    ValProbe probe;
    if (!val_houses.empty()) {
        std::vector<GeoPoint> val_pts;
        val_pts.reserve(val_houses.size());
        for (const auto& h : val_houses) val_pts.push_back(h.location);
        const auto extended = attach_test_nodes(res.pipeline.graph, val_pts, cfg.kernel);
        WalkConfig vcfg = wcfg;
        vcfg.num_sequences = 1;
        const auto vseqs = test_sequences(extended, cfg.val_per_house, vcfg);

        probe.n_houses = static_cast<int>(val_houses.size());
        probe.truths.resize(val_houses.size());
        for (std::size_t q = 0; q < val_houses.size(); ++q) probe.truths[q] = val_houses[q].price;

        MatrixXd val_rows(val_houses.size(), feat_cols.rows());
        for (std::size_t q = 0; q < val_houses.size(); ++q) {
            val_rows.row(q) = val_houses[q].features.transpose();
        }
        normalize_apply(val_rows, res.pipeline.feature_stats);
        const MatrixXd val_cols = val_rows.transpose();
        const int fit_n = res.pipeline.graph.node_count();

        const auto batch = static_cast<Eigen::Index>(vseqs.size());
        probe.xs.assign(cfg.walk_length, MatrixXd(feat_cols.rows(), batch));
        probe.positions.resize(vseqs.size());
        probe.house_of.resize(vseqs.size());
        for (Eigen::Index j = 0; j < batch; ++j) {
            const auto& w = vseqs[j];
            probe.positions[j] = w.test_position;
            probe.house_of[j] = w.nodes[w.test_position] - fit_n;
            for (int t = 0; t < cfg.walk_length; ++t) {
                const int node = w.nodes[t];
                probe.xs[t].col(j) =
                    node < fit_n ? feat_cols.col(node) : val_cols.col(node - fit_n);
            }
        }
    }

    // model
    ModelDims dims{static_cast<int>(feat_cols.rows()), cfg.hidden1, cfg.hidden2};
    res.pipeline.model = init_model(dims, cfg.seed);
    res.pipeline.config = cfg;
    auto& model = res.pipeline.model;

    RmsPropState opt_state = make_rmsprop_state(dims);

    BlstmParams best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::int64_t best_step = -1;
    int evals_since_best = 0;

    std::deque<double> loss_window;
    const int window = std::max(1, cfg.conv_window);

    std::int64_t step = 0;
    bool stop = false;
    const std::int64_t m = static_cast<std::int64_t>(walks.size());
    for (std::int64_t epoch = 0; !stop && step < cfg.max_steps; ++epoch) {
        std::vector<std::int64_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_rng = rng::stream(cfg.seed, rng::kBatchShuffle, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::int64_t pos = 0; pos < m && !stop && step < cfg.max_steps; pos += cfg.batch_size) {
            const auto bsz = std::min<std::int64_t>(cfg.batch_size, m - pos);
            std::span<const std::int64_t> batch_idx(order.data() + pos, bsz);

            // fixed chunk boundaries: reduction order never depends on the
            // worker count
            const std::int64_t n_chunks = (bsz + cfg.chunk_size - 1) / cfg.chunk_size;
            std::vector<BlstmParams> chunk_grads(n_chunks);
            std::vector<double> chunk_sq(n_chunks, 0.0);
            parallel_for_chunks(bsz, cfg.chunk_size,
                                [&](std::int64_t lo, std::int64_t hi, std::int64_t c) {
                                    auto b = assemble_training_batch(
                                        walks, batch_idx.subspan(lo, hi - lo), feat_cols,
                                        z_prices, fit_houses);
                                    ForwardCache cache;
                                    blstm_forward(model, b.xs, &cache);
                                    chunk_sq[c] = (cache.preds - b.targets).squaredNorm();
                                    chunk_grads[c] = backward(model, cache, b.targets,
                                                              static_cast<int>(bsz));
                                });

            BlstmParams grads = std::move(chunk_grads[0]);
            for (std::int64_t c = 1; c < n_chunks; ++c) accumulate(grads, chunk_grads[c]);

            double batch_loss = 0.0;
            for (std::int64_t c = 0; c < n_chunks; ++c) batch_loss += chunk_sq[c];
            batch_loss /= static_cast<double>(bsz);
            if (!std::isfinite(batch_loss)) {
                throw NumericalFailure("training loss became non-finite at step " +
                                       std::to_string(step));
            }

            if (cfg.l2 > 0.0) add_l2(grads, model.params, cfg.l2);
            if (cfg.clip_norm > 0.0) clip_by_global_norm(grads, cfg.clip_norm);
            rmsprop_step(model.params, grads, opt_state, cfg.optimizer);
            ++step;

            res.log.push_back({step, batch_loss, wall_ms()});
            res.final_loss = batch_loss;

            loss_window.push_back(batch_loss);
            if (static_cast<int>(loss_window.size()) > 2 * window) loss_window.pop_front();
            if (static_cast<int>(loss_window.size()) == 2 * window) {
                double prev = 0.0, cur = 0.0;
                for (int i = 0; i < window; ++i) prev += loss_window[i];
                for (int i = window; i < 2 * window; ++i) cur += loss_window[i];
                prev /= window;
                cur /= window;
                if (std::abs(cur - prev) < cfg.conv_rel_tol * std::max(std::abs(prev), 1e-12)) {
                    stop = true;
                }
            }

            if (step % 100 == 0 && !model.params.all_finite()) {
                throw NumericalFailure("model parameters became non-finite at step " +
                                       std::to_string(step));
            }
            if (cfg.target_train_mape > 0.0 && step % cfg.probe_every == 0) {
                const double mape = mape_on_walks(model, walks, 500, feat_cols, z_prices,
                                                  res.pipeline.price_mean, res.pipeline.price_std,
                                                  cfg.chunk_size);
                if (mape < cfg.target_train_mape) stop = true;
            }

            if (!probe.empty() && step % cfg.val_every == 0) {
                const double vmape = probe.mape(model, res.pipeline.price_mean,
                                                res.pipeline.price_std, cfg.chunk_size);
                if (vmape < best_val) {
                    best_val = vmape;
                    best_params = model.params;
                    best_step = step;
                    evals_since_best = 0;
                } else if (++evals_since_best >= cfg.val_patience) {
                    stop = true;
                }
            }
        }
    }

    if (best_step >= 0) {
        model.params = std::move(best_params);
        res.best_val_mape = best_val;
        res.best_val_step = best_step;
    }

    if (!model.params.all_finite()) {
        throw NumericalFailure("model parameters non-finite after training");
    }
    res.steps_run = step;
    return res;
}

double training_mape(const TrainedPipeline& tp, const std::vector<House>& train_houses,
                     std::int64_t probe_walks) {
    const MatrixXd feat_cols = feature_columns(train_houses, tp.feature_stats);
    VectorXd z_prices(train_houses.size());
    for (std::size_t i = 0; i < train_houses.size(); ++i) {
        z_prices[i] = (train_houses[i].price - tp.price_mean) / tp.price_std;
    }
    WalkConfig wcfg;
    wcfg.length = tp.config.walk_length;
    wcfg.num_sequences = std::min<std::int64_t>(probe_walks, tp.config.num_sequences);
    wcfg.seed = tp.config.seed;
    const auto walks = random_walks(tp.graph, wcfg);
    return mape_on_walks(tp.model, walks, probe_walks, feat_cols, z_prices, tp.price_mean,
                         tp.price_std, tp.config.chunk_size);
}

namespace {

double population_std(const std::vector<double>& v, double mean) {
    if (v.empty()) return 0.0;
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    return std::sqrt(sq / static_cast<double>(v.size()));
}

}  // namespace

std::vector<PredictionSummary> predict(const TrainedPipeline& tp,
                                       const std::vector<House>& train_houses,
                                       const std::vector<House>& test_houses, int per_test) {
    if (test_houses.empty()) throw InvalidInput("predict: empty test set");
    if (per_test < 1) throw InvalidInput("predict: per_test must be >= 1");
    if (tp.graph.node_count() != static_cast<int>(train_houses.size())) {
        throw InvalidInput(
            "predict: train_houses does not match the graph the model was fitted on "
            "(pass TrainResult::houses_used)");
    }

    std::vector<GeoPoint> test_pts;
    test_pts.reserve(test_houses.size());
    for (const auto& h : test_houses) test_pts.push_back(h.location);
    const auto extended = attach_test_nodes(tp.graph, test_pts, tp.config.kernel);

    // features for all nodes of the extended graph, train stats applied
    std::vector<House> all;
    all.reserve(train_houses.size() + test_houses.size());
    all.insert(all.end(), train_houses.begin(), train_houses.end());
    all.insert(all.end(), test_houses.begin(), test_houses.end());
    const MatrixXd feat_cols = feature_columns(all, tp.feature_stats);

    WalkConfig wcfg;
    wcfg.length = tp.config.walk_length;
    wcfg.num_sequences = 1;  // unused by test_sequences
    wcfg.seed = tp.config.seed;
    TestWalkReport report;
    const auto seqs = test_sequences(extended, per_test, wcfg, &report);

    // bucket sequences by test node
    const int train_n = extended.train_count();
    std::vector<std::vector<const WalkSequence*>> by_house(test_houses.size());
    for (const auto& s : seqs) {
        by_house[s.nodes[s.test_position] - train_n].push_back(&s);
    }

    std::vector<PredictionSummary> out(test_houses.size());
    parallel_for_chunks(
        static_cast<std::int64_t>(test_houses.size()), 1,
        [&](std::int64_t lo, std::int64_t hi, std::int64_t) {
            for (std::int64_t q = lo; q < hi; ++q) {
                PredictionSummary& s = out[q];
                s.id = test_houses[q].id;
                s.truth = test_houses[q].price;
                const auto& mine = by_house[q];
                if (mine.empty()) {
                    s.flagged = true;
                    s.n_sequences = 0;
                    s.predictions = {tp.price_mean};
                    s.mean = tp.price_mean;
                    s.stddev = 0.0;
                    s.best = tp.price_mean;
                    continue;
                }
                const int steps = tp.config.walk_length;
                std::vector<MatrixXd> xs(steps,
                                         MatrixXd(feat_cols.rows(),
                                                  static_cast<Eigen::Index>(mine.size())));
                for (std::size_t j = 0; j < mine.size(); ++j) {
                    for (int t = 0; t < steps; ++t) {
                        xs[t].col(static_cast<Eigen::Index>(j)) =
                            feat_cols.col(mine[j]->nodes[t]);
                    }
                }
                const MatrixXd preds = blstm_forward(tp.model, xs);
                s.predictions.resize(mine.size());
                for (std::size_t j = 0; j < mine.size(); ++j) {
                    const double z = preds(mine[j]->test_position, static_cast<Eigen::Index>(j));
                    s.predictions[j] = z * tp.price_std + tp.price_mean;
                }
                s.n_sequences = static_cast<int>(mine.size());
                s.mean = std::accumulate(s.predictions.begin(), s.predictions.end(), 0.0) /
                         static_cast<double>(s.predictions.size());
                s.stddev = population_std(s.predictions, s.mean);
                s.best = s.predictions[0];
                for (double p : s.predictions) {
                    if (std::abs(p - s.truth) < std::abs(s.best - s.truth)) s.best = p;
                }
            }
        });
    return out;
}

Metrics evaluate(std::span<const PredictionSummary> summaries, EvalMode mode) {
    if (summaries.empty()) throw InvalidInput("evaluate: no summaries");
    Metrics m;
    for (const auto& s : summaries) {
        const double p = mode == EvalMode::Best ? s.best : s.mean;
        if (!(s.truth > 0.0)) throw InvalidInput("evaluate: non-positive truth for " + s.id);
        m.mae += std::abs(s.truth - p);
        m.mape += std::abs(s.truth - p) / s.truth;
    }
    m.mae /= static_cast<double>(summaries.size());
    m.mape /= static_cast<double>(summaries.size());
    return m;
}

double grouping_std(const PredictionSummary& s) {
    if (s.n_sequences <= 1) return 0.0;
    const double n = static_cast<double>(s.n_sequences);
    return s.stddev * std::sqrt(n / (n - 1.0));
}

std::vector<GroupMetrics> confidence_groups(std::span<const PredictionSummary> summaries, int k) {
    if (k < 1) throw InvalidInput("confidence_groups: k must be >= 1");
    if (static_cast<int>(summaries.size()) < k) {
        throw InvalidInput("confidence_groups: fewer summaries than groups");
    }
    std::vector<std::size_t> order(summaries.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return grouping_std(summaries[a]) < grouping_std(summaries[b]);
    });

    const std::size_t base = summaries.size() / k;
    std::vector<GroupMetrics> out;
    std::size_t pos = 0;
    for (int gi = 0; gi < k; ++gi) {
        const std::size_t len = gi == k - 1 ? summaries.size() - pos : base;
        std::vector<PredictionSummary> group;
        group.reserve(len);
        for (std::size_t i = pos; i < pos + len; ++i) group.push_back(summaries[order[i]]);
        GroupMetrics gm;
        gm.index = gi;
        gm.n = static_cast<int>(len);
        gm.metrics = evaluate(group, EvalMode::Average);
        out.push_back(gm);
        pos += len;
    }
    return out;
}

void save_predictions_csv(const std::string& path, std::span<const PredictionSummary> summaries,
                          bool diagnostic_best) {
    std::ofstream f(path + ".tmp", std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << "id,truth,mean,std,n_sequences,flagged";
    if (diagnostic_best) f << ",best";
    f << "\n";
    char buf[256];
    for (const auto& s : summaries) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%d,%d", s.id.c_str(), s.truth,
                      s.mean, s.stddev, s.n_sequences, s.flagged ? 1 : 0);
        f << buf;
        if (diagnostic_best) {
            std::snprintf(buf, sizeof(buf), ",%.17g", s.best);
            f << buf;
        }
        f << "\n";
    }
    f.close();
    if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0) {
        throw IoError("rename failed: " + path);
    }
}

std::vector<PredictionSummary> load_predictions_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("empty predictions csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const bool has_best = line == "id,truth,mean,std,n_sequences,flagged,best";
    if (!has_best && line != "id,truth,mean,std,n_sequences,flagged") {
        throw IoError("unexpected predictions header: " + line);
    }
    std::vector<PredictionSummary> out;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> fields;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != (has_best ? 7u : 6u)) {
            throw IoError("bad predictions row: " + line);
        }
        PredictionSummary s;
        s.id = fields[0];
        s.truth = std::stod(fields[1]);
        s.mean = std::stod(fields[2]);
        s.stddev = std::stod(fields[3]);
        s.n_sequences = std::stoi(fields[4]);
        s.flagged = fields[5] == "1";
        s.best = has_best ? std::stod(fields[6]) : s.mean;
        out.push_back(std::move(s));
    }
    return out;
}

void save_train_log_csv(const std::string& path, std::span<const TrainLogRow> log) {
    std::string buf = "step,loss,wall_ms\n";
    char line[128];
    for (const auto& r : log) {
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.3f\n", static_cast<long long>(r.step),
                      r.loss, r.wall_ms);
        buf += line;
    }
    std::ofstream f(path + ".tmp", std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f << buf;
    f.close();
    if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0) {
        throw IoError("rename failed: " + path);
    }
}

}  // namespace gwr
