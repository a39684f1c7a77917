// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured numbers. The benchmark-trend criteria share one set
// of ten seeded end-to-end runs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "gwr/bench.hpp"
#include "gwr/errors.hpp"
#include "gwr/graph.hpp"
#include "gwr/lasso.hpp"
#include "gwr/net.hpp"
#include "gwr/pipeline.hpp"
#include "gwr/rng.hpp"
#include "gwr/synth.hpp"
#include "gwr/walks.hpp"

using namespace gwr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[criterion %02d] %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

// ---- shared ten-seed benchmark runs ----------------------------------------

struct SeedRun {
    std::uint64_t seed;
    BenchResult result;
    double wall_s;
};

const std::vector<SeedRun>& bench_runs() {
    static const std::vector<SeedRun> runs = [] {
        std::vector<SeedRun> out;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            BenchConfig cfg;
            cfg.seed = seed;
            cfg.apply_seed();
            const double t0 = now_s();
            BenchResult r = run_bench(cfg);
            const double wall = now_s() - t0;
            std::printf("  [bench seed %llu] blstm %.2f%%  lasso %.2f%%  mean %.2f%%  "
                        "group MAE %.2f/%.2f/%.2f  %.0f s\n",
                        static_cast<unsigned long long>(seed), r.blstm_avg.mape * 100.0,
                        r.lasso.mape * 100.0, r.global_mean.mape * 100.0,
                        r.groups[0].metrics.mae, r.groups[1].metrics.mae,
                        r.groups[2].metrics.mae, wall);
            std::fflush(stdout);
            out.push_back({seed, std::move(r), wall});
        }
        return out;
    }();
    return runs;
}

std::vector<GeoPoint> random_points(int n, double box_miles, double lat0, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<GeoPoint> pts(n);
    const double lat_span = box_miles / 69.0;
    const double lon_span = box_miles / (69.171 * std::cos(lat0 * 3.14159265358979 / 180.0));
    for (auto& p : pts) {
        p.lat = lat0 + u(rng) * lat_span;
        p.lon = -80.0 + u(rng) * lon_span;
    }
    return pts;
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness on random tiny models") {
    const double t0 = now_s();
    const ModelDims dims{3, 4, 3};
    const int steps = 5, batch = 2;
    int models_checked = 0;
    double worst_ratio = 0.0;
    bool pass = true;

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto model = init_model(dims, seed);
        // generic parameter point: the head must not stay at its zero init
        std::mt19937_64 hrng(seed * 31 + 7);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (Eigen::Index i = 0; i < model.params.head.w.size(); ++i) {
            model.params.head.w[i] = u(hrng);
        }
        model.params.head.b = u(hrng);

        std::mt19937_64 drng(seed * 17 + 3);
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<MatrixXd> xs(steps, MatrixXd(dims.input, batch));
        for (auto& x : xs) {
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(drng);
        }
        MatrixXd targets(steps, batch);
        for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = g(drng);

        ForwardCache cache;
        blstm_forward(model, xs, &cache);
        const auto grads = backward(model, cache, targets, batch);

        auto spans = param_spans(model.params);
        auto gspans = param_spans(grads);
        const double h = 1e-5;
        for (std::size_t s = 0; s < spans.size() && pass; ++s) {
            for (std::size_t k = 0; k < spans[s].second; ++k) {
                double& p = spans[s].first[k];
                const double saved = p;
                p = saved + h;
                const double up = loss(blstm_forward(model, xs), targets);
                p = saved - h;
                const double dn = loss(blstm_forward(model, xs), targets);
                p = saved;
                const double fd = (up - dn) / (2.0 * h);
                const double an = gspans[s].first[k];
                const double err = std::abs(fd - an);
                const double tol = std::max(1e-6, 1e-4 * std::max(std::abs(fd), std::abs(an)));
                worst_ratio = std::max(worst_ratio, err / tol);
                if (err > tol) {
                    pass = false;
                    break;
                }
            }
        }
        ++models_checked;
    }
    const double elapsed = now_s() - t0;
    pass = pass && models_checked == 20 && elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%d models, every parameter within max(1e-6, 1e-4 rel); worst err/tol %.3g; "
                  "%.1f s (< 30 s)",
                  models_checked, worst_ratio, elapsed);
    report(1, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 2: empirical walk law matches the transition probabilities") {
    const double t0 = now_s();
    double worst_dev = 0.0;
    for (std::uint64_t gseed = 1; gseed <= 5; ++gseed) {
        const auto pts = random_points(150, 6.0, 36.0 + 3.0 * gseed, gseed);
        KernelConfig kcfg;
        kcfg.epsilon = 2.0;
        const auto g = build_graph(pts, kcfg);

        // fixed node: highest-degree node of this graph
        int node = 0;
        for (int i = 1; i < g.node_count(); ++i) {
            if (g.degree(i) > g.degree(node)) node = i;
        }
        REQUIRE(g.degree(node) >= 2);

        double total = 0.0;
        for (const auto& nb : g.neighbors(node)) total += nb.weight;

        auto rng = rng::stream(900 + gseed, rng::kWalk);
        std::map<int, std::int64_t> counts;
        const int steps = 100000;
        for (int s = 0; s < steps; ++s) counts[sample_step(g, node, rng)]++;

        for (const auto& nb : g.neighbors(node)) {
            const double expect = nb.weight / total;
            const double got = static_cast<double>(counts[nb.to]) / steps;
            worst_dev = std::max(worst_dev, std::abs(expect - got));
        }
    }
    const double elapsed = now_s() - t0;
    const bool pass = worst_dev < 0.01 && elapsed < 10.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "5 graphs x 100k steps, max |freq - p_j| = %.4f (< 0.01); %.1f s (< 10 s)",
                  worst_dev, elapsed);
    report(2, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 3: epsilon-graph equals brute force with kernel-exact weights") {
    bool pass = true;
    double worst_weight_err = 0.0;
    int sets = 0;
    const int sizes[] = {60, 150, 199, 200, 240, 333, 450, 600, 800, 1000};
    const double lats[] = {0.5, 37.0, 43.0, 52.0, 60.0};
    const double epsilons[] = {3.0, 4.0, 5.0, 6.0};

    for (int i = 0; i < 10; ++i) {
        const auto pts = random_points(sizes[i], 10.0, lats[i % 5], 7000 + i);
        KernelConfig cfg;
        cfg.epsilon = epsilons[i % 4];

        const auto g = build_graph(pts, cfg);

        std::set<std::pair<int, int>> brute;
        std::map<std::pair<int, int>, double> weights;
        for (int a = 0; a < static_cast<int>(pts.size()); ++a) {
            for (int b = a + 1; b < static_cast<int>(pts.size()); ++b) {
                const double d = geodesic_miles(pts[a], pts[b]);
                if (d <= cfg.epsilon) {
                    brute.insert({a, b});
                    weights[{a, b}] = similarity(d, cfg);
                }
            }
        }
        std::set<std::pair<int, int>> got;
        for (int a = 0; a < g.node_count(); ++a) {
            for (const auto& nb : g.neighbors(a)) {
                if (nb.to > a) {
                    got.insert({a, nb.to});
                    auto it = weights.find({a, nb.to});
                    if (it == weights.end()) {
                        pass = false;
                    } else {
                        worst_weight_err =
                            std::max(worst_weight_err, std::abs(nb.weight - it->second));
                    }
                }
            }
        }
        pass = pass && got == brute && worst_weight_err <= 1e-12;
        ++sets;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%d point sets (n up to 1000): edge sets identical, max weight err %.2g "
                  "(<= 1e-12)",
                  sets, worst_weight_err);
    report(3, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 4: overfit sanity on 50 houses") {
    SynthConfig city;
    city.n_houses = 50;
    city.n_clusters = 5;
    city.seed = 11;
    const auto houses = generate(city);

    TrainConfig cfg = BenchConfig().train;  // the default desk-scale net
    cfg.num_sequences = 2000;
    cfg.max_steps = 3000;
    cfg.target_train_mape = 0.02;
    cfg.probe_every = 50;
    cfg.seed = 11;

    const auto res = train(houses, cfg);
    const double mape = training_mape(res.pipeline, houses, 500);
    const bool pass = mape < 0.02 && res.steps_run <= 3000;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "training MAPE %.3f%% (< 2%%) after %lld steps (<= 3000)",
                  mape * 100.0, static_cast<long long>(res.steps_run));
    report(4, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 5: benchmark trend, B-LSTM beats LASSO and the global mean") {
    const auto& runs = bench_runs();
    int wins = 0;
    double max_wall = 0.0;
    for (const auto& r : runs) {
        const bool win = r.result.blstm_avg.mape < r.result.lasso.mape &&
                         r.result.blstm_avg.mape < r.result.global_mean.mape &&
                         r.result.blstm_avg.mape < 0.12;
        wins += win ? 1 : 0;
        max_wall = std::max(max_wall, r.wall_s);
    }
    const bool pass = wins >= 8 && max_wall < 600.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "B-LSTM-avg < LASSO, < global-mean, and < 12%% MAPE in %d/10 seeds (>= 8); "
                  "slowest run %.0f s (< 600 s)",
                  wins, max_wall);
    report(5, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 6: confidence trend, low-std tercile at most high-std tercile MAE") {
    const auto& runs = bench_runs();
    int wins = 0;
    for (const auto& r : runs) {
        REQUIRE(r.result.groups.size() == 3);
        if (r.result.groups.front().metrics.mae <= r.result.groups.back().metrics.mae) ++wins;
    }
    const bool pass = wins >= 8;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "lowest-std tercile MAE <= highest-std tercile MAE in %d/10 "
                  "seeds (>= 8)", wins);
    report(6, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 7: best-mode MAE never exceeds average-mode MAE") {
    const auto& runs = bench_runs();
    bool pass = true;
    for (const auto& r : runs) {
        pass = pass && r.result.blstm_best.mae <= r.result.blstm_avg.mae;
        // per-house: best is the argmin by construction
        for (const auto& s : r.result.summaries) {
            pass = pass && std::abs(s.best - s.truth) <= std::abs(s.mean - s.truth);
        }
    }
    report(7, pass, "evaluate(Best).MAE <= evaluate(Average).MAE on every run, exactly");
    CHECK(pass);
}

TEST_CASE("criterion 8: LASSO oracle identities") {
    bool pass = true;

    // lambda = 0 equals the normal-equations solution
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd x(20, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    VectorXd w_true(5);
    w_true << 2, -1, 0.5, 0, 1;
    VectorXd y = x * w_true + VectorXd::Constant(20, 4.0);
    for (int i = 0; i < 20; ++i) y[i] += 0.05 * g(rng);

    const Eigen::RowVectorXd xm = x.colwise().mean();
    const MatrixXd xc = x.rowwise() - xm;
    const VectorXd yc = y.array() - y.mean();
    const VectorXd w_ls = (xc.transpose() * xc).ldlt().solve(xc.transpose() * yc);

    LassoConfig cfg;
    cfg.lambda = 0.0;
    cfg.tol = 1e-12;
    const auto fit0 = lasso_fit(x, y, cfg);
    const double ls_err = (fit0.weights - w_ls).cwiseAbs().maxCoeff();
    pass = pass && ls_err < 1e-6;

    // lambda >= lambda_max yields exactly zero
    const double lmax = lasso_lambda_max(x, y);
    cfg.lambda = lmax;
    const auto fitmax = lasso_fit(x, y, cfg);
    bool all_zero = true;
    for (int j = 0; j < 5; ++j) all_zero = all_zero && fitmax.weights[j] == 0.0;
    pass = pass && all_zero;

    // objective non-increasing on a bigger instance
    MatrixXd x2(100, 12);
    for (Eigen::Index i = 0; i < x2.size(); ++i) x2.data()[i] = g(rng);
    VectorXd y2 = x2.col(0) - 2.0 * x2.col(7);
    for (int i = 0; i < 100; ++i) y2[i] += 0.1 * g(rng);
    cfg.lambda = 0.03;
    cfg.tol = 1e-10;
    const auto fit2 = lasso_fit(x2, y2, cfg);
    bool monotone = true;
    for (std::size_t s = 1; s < fit2.objective_per_sweep.size(); ++s) {
        monotone = monotone && fit2.objective_per_sweep[s] <=
                                   fit2.objective_per_sweep[s - 1] +
                                       1e-12 * std::max(1.0, fit2.objective_per_sweep[s - 1]);
    }
    pass = pass && monotone;

    char buf[220];
    std::snprintf(buf, sizeof(buf),
                  "lambda=0 vs normal equations: max err %.2g (< 1e-6); lambda>=lambda_max -> 0 "
                  "exactly: %s; objective non-increasing over %zu sweeps: %s",
                  ls_err, all_zero ? "yes" : "no", fit2.objective_per_sweep.size(),
                  monotone ? "yes" : "no");
    report(8, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 9: metric unit identities") {
    auto make = [](std::string id, double pred, double truth) {
        PredictionSummary s;
        s.id = std::move(id);
        s.predictions = {pred};
        s.mean = pred;
        s.stddev = 0.0;
        s.best = pred;
        s.truth = truth;
        s.n_sequences = 1;
        return s;
    };
    std::vector<PredictionSummary> sums = {make("a", 110.0, 100.0), make("b", 180.0, 200.0)};
    const auto m = evaluate(sums, EvalMode::Average);
    char mape_str[16];
    std::snprintf(mape_str, sizeof(mape_str), "%.2f", m.mape * 100.0);
    const bool pass = m.mae == 15.0 && std::abs(m.mape - 0.10) < 1e-15 &&
                      std::string(mape_str) == "10.00";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "MAE = %.1f (exactly 15.0), MAPE prints as %s%% (10.00%%)",
                  m.mae, mape_str);
    report(9, pass, buf);
    CHECK(pass);
}

TEST_CASE("criterion 10: bench runs are byte-identical across repeats and thread counts") {
    namespace fs = std::filesystem;
    const std::string cli = GWR_CLI_PATH;
    const auto base = fs::temp_directory_path() / "gwr_accept_det";
    fs::remove_all(base);
    fs::create_directories(base);

    auto run_bench_cli = [&](const std::string& name, int threads) {
        const auto dir = (base / name).string();
        const std::string cmd = cli + " --threads " + std::to_string(threads) +
                                " bench --seed 42 --out " + dir +
                                " --n-houses 400 --max-steps 150 --per-test 40" +
                                " >/dev/null 2>/dev/null";
        REQUIRE(std::system(cmd.c_str()) == 0);
        std::ifstream f(dir + "/metrics.json", std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };

    const std::string a = run_bench_cli("t1_a", 1);
    const std::string b = run_bench_cli("t1_b", 1);
    const std::string c = run_bench_cli("t4", 4);
    const bool pass = !a.empty() && a == b && a == c;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "metrics.json: repeat == first: %s; 4 threads == 1 thread: %s (%zu bytes)",
                  a == b ? "yes" : "no", a == c ? "yes" : "no", a.size());
    report(10, pass, buf);
    CHECK(pass);
    fs::remove_all(base);
}

TEST_CASE("criterion 11: taint guards block test data from training-only stages") {
    SynthConfig city;
    city.n_houses = 60;
    city.n_clusters = 4;
    city.seed = 13;
    const auto houses = generate(city);
    auto [tr, te] = split(houses, 0.8, 13);

    bool graph_guard = false, norm_guard = false, batch_guard = false, clean_ok = true;

    // graph build: train() checks its input before touching locations
    auto smuggled = tr;
    smuggled.push_back(te.front());
    TrainConfig cfg = BenchConfig().train;
    cfg.num_sequences = 200;
    cfg.max_steps = 2;
    cfg.seed = 13;
    try {
        train(smuggled, cfg);
    } catch (const LeakageError& e) {
        graph_guard = std::string(e.what()).find("graph build") != std::string::npos;
    }

    // normalization fit
    try {
        fit_feature_stats(smuggled);
    } catch (const LeakageError& e) {
        norm_guard = std::string(e.what()).find("normalization fit") != std::string::npos;
    }

    // training batches: a walk that touches a tainted record
    auto batch_source = tr;
    batch_source[2].tainted = true;
    const auto fitted = fit_feature_stats(tr);
    VectorXd z = VectorXd::Zero(static_cast<Eigen::Index>(tr.size()));
    std::vector<WalkSequence> walks(1);
    walks[0].nodes = {0, 1, 2, 1};
    const std::int64_t idx[] = {0};
    try {
        assemble_training_batch(walks, idx, fitted.columns, z, batch_source);
    } catch (const LeakageError&) {
        batch_guard = true;
    }

    // and the clean path never trips a guard
    try {
        const auto res = train(tr, cfg);
        predict(res.pipeline, res.houses_used, te, 5);
    } catch (const LeakageError&) {
        clean_ok = false;
    }

    const bool pass = graph_guard && norm_guard && batch_guard && clean_ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "guards fire on injected test data: graph build %s, normalization %s, "
                  "batch assembly %s; clean run unaffected %s",
                  graph_guard ? "yes" : "no", norm_guard ? "yes" : "no",
                  batch_guard ? "yes" : "no", clean_ok ? "yes" : "no");
    report(11, pass, buf);
    CHECK(pass);
}
