// gwr: location-plus-features price regression toolkit.
//
// Subcommands cover each pipeline stage (synth, graph, walk, train, predict,
// eval, lasso) plus an end-to-end synthetic benchmark (bench). Every
// subcommand is a pure function of (inputs, flags, seed); outputs are written
// atomically. Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gwr/bench.hpp"
#include "gwr/errors.hpp"
#include "gwr/io.hpp"
#include "gwr/parallel.hpp"
#include "gwr/pipeline.hpp"
#include "gwr/synth.hpp"
#include "gwr/walks.hpp"

namespace {

using nlohmann::ordered_json;

void print_error(const char* type, const std::string& message) {
    ordered_json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

// flag > config file > built-in default
template <typename T>
void overlay(const CLI::App* cmd, const std::string& flag, ordered_json& cfg,
             const std::string& key, const T& value) {
    if (cmd->count(flag) > 0) cfg[key] = value;
}

gwr::TrainConfig resolve_train_config(const std::string& config_path, const ordered_json& flags) {
    ordered_json j = gwr::train_config_to_json(gwr::TrainConfig{});
    if (!config_path.empty()) {
        const ordered_json file = gwr::load_json(config_path);
        for (const auto& [k, v] : file.items()) j[k] = v;
    }
    for (const auto& [k, v] : flags.items()) j[k] = v;
    return gwr::train_config_from_json(j);
}

std::string format_metrics_line(const char* name, const gwr::Metrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s MAE %.4f  MAPE %.2f%%", name, m.mae, m.mape * 100.0);
    return buf;
}

int cmd_synth(const std::string& config_path, const ordered_json& flag_overrides,
              const std::string& out_dir) {
    ordered_json j = gwr::synth_config_to_json(gwr::SynthConfig{});
    if (!config_path.empty()) {
        const ordered_json file = gwr::load_json(config_path);
        for (const auto& [k, v] : file.items()) j[k] = v;
    }
    for (const auto& [k, v] : flag_overrides.items()) j[k] = v;
    const auto cfg = gwr::synth_config_from_json(j);

    gwr::SynthTruth truth;
    const auto houses = gwr::generate(cfg, &truth);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    gwr::save_house_csv((fs::path(out_dir) / "houses.csv").string(), houses);
    gwr::FeatureTable table;
    table.ids.reserve(houses.size());
    table.values.resize(static_cast<Eigen::Index>(houses.size()), cfg.feature_dim);
    for (std::size_t i = 0; i < houses.size(); ++i) {
        table.ids.push_back(houses[i].id);
        table.values.row(static_cast<Eigen::Index>(i)) = houses[i].features.transpose();
    }
    gwr::save_feature_store((fs::path(out_dir) / "features.bin").string(), table);
    gwr::save_json((fs::path(out_dir) / "truth.json").string(), truth_to_json(cfg, truth));
    std::cout << "wrote " << houses.size() << " houses to " << out_dir << "\n";
    return 0;
}

int cmd_graph(const std::string& houses_path, const gwr::KernelConfig& kernel,
              const std::string& out_path) {
    const auto rows = gwr::load_house_csv(houses_path);
    std::vector<gwr::GeoPoint> pts;
    std::vector<std::string> ids;
    for (const auto& r : rows) {
        pts.push_back({r.lat, r.lon});
        ids.push_back(r.id);
    }
    gwr::GraphBuildReport report;
    const auto g = gwr::build_graph(pts, kernel, &report);
    gwr::save_json(out_path, gwr::graph_to_json(g, kernel, ids, report.distance_fallbacks));
    std::cout << "nodes " << report.node_count << ", edges " << report.edge_count
              << ", mean degree " << report.mean_degree << ", isolated "
              << report.isolated.size() << "\n";
    return 0;
}

int cmd_walk(const std::string& graph_path, int length, std::int64_t count, std::uint64_t seed,
             const std::string& out_path) {
    const auto [g, ids] = gwr::graph_from_json(gwr::load_json(graph_path));
    gwr::WalkConfig cfg;
    cfg.length = length;
    cfg.num_sequences = count;
    cfg.seed = seed;
    const auto walks = gwr::random_walks(g, cfg);
    gwr::save_walks(out_path, walks);
    std::cout << "wrote " << walks.size() << " walks to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& houses_path, const std::string& features_path,
              const gwr::TrainConfig& cfg, const std::string& out_path,
              const std::string& log_path) {
    const auto houses = gwr::load_dataset(houses_path, features_path);
    auto [train_houses, test_houses] = gwr::split(houses, cfg.split_fraction, cfg.seed);
    const auto res = gwr::train(train_houses, cfg);

    ordered_json extra;
    extra["train_config"] = gwr::train_config_to_json(cfg);
    extra["price_mean"] = res.pipeline.price_mean;
    extra["price_std"] = res.pipeline.price_std;
    extra["feat_mean"] = std::vector<double>(
        res.pipeline.feature_stats.mean.data(),
        res.pipeline.feature_stats.mean.data() + res.pipeline.feature_stats.mean.size());
    extra["feat_std"] = std::vector<double>(
        res.pipeline.feature_stats.stddev.data(),
        res.pipeline.feature_stats.stddev.data() + res.pipeline.feature_stats.stddev.size());
    gwr::save_checkpoint(out_path, res.pipeline.model, res.steps_run, cfg.optimizer, extra);
    gwr::save_train_log_csv(log_path.empty() ? out_path + ".log.csv" : log_path, res.log);

    std::cout << "trained " << res.steps_run << " steps, final loss " << res.final_loss
              << ", graph edges " << res.graph_report.edge_count << ", isolated "
              << res.graph_report.isolated.size() << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& houses_path,
                const std::string& features_path, int per_test, bool diagnostic_best,
                const std::string& out_path) {
    ordered_json manifest;
    gwr::BlstmModel model = gwr::load_checkpoint(model_path, &manifest);
    if (!manifest.contains("extra") || !manifest["extra"].contains("train_config")) {
        throw gwr::InvalidInput("checkpoint lacks pipeline metadata; was it written by train?");
    }
    const auto& extra = manifest["extra"];
    const auto cfg = gwr::train_config_from_json(extra["train_config"]);

    gwr::TrainedPipeline tp;
    tp.model = std::move(model);
    tp.config = cfg;
    tp.price_mean = extra.at("price_mean").get<double>();
    tp.price_std = extra.at("price_std").get<double>();
    const auto fm = extra.at("feat_mean").get<std::vector<double>>();
    const auto fsd = extra.at("feat_std").get<std::vector<double>>();
    tp.feature_stats.mean = Eigen::Map<const Eigen::VectorXd>(fm.data(), fm.size());
    tp.feature_stats.stddev = Eigen::Map<const Eigen::VectorXd>(fsd.data(), fsd.size());

    const auto houses = gwr::load_dataset(houses_path, features_path);
    auto [train_houses, test_houses] = gwr::split(houses, cfg.split_fraction, cfg.seed);
    // reproduce the fit subset the checkpoint was actually trained on
    auto [fit_houses, val_houses] = gwr::split_validation(train_houses, cfg);

    std::vector<gwr::GeoPoint> pts;
    pts.reserve(fit_houses.size());
    for (const auto& h : fit_houses) pts.push_back(h.location);
    tp.graph = gwr::build_graph(pts, cfg.kernel);

    const auto summaries = gwr::predict(tp, fit_houses, test_houses, per_test);
    gwr::save_predictions_csv(out_path, summaries, diagnostic_best);
    int flagged = 0;
    for (const auto& s : summaries) flagged += s.flagged ? 1 : 0;
    std::cout << "predicted " << summaries.size() << " test houses (" << flagged
              << " flagged) -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& predictions_path, int groups, bool diagnostic_best,
             const std::string& out_path) {
    const auto summaries = gwr::load_predictions_csv(predictions_path);
    const auto j = gwr::metrics_json(summaries, gwr::EvalMode::Average, groups, diagnostic_best);
    gwr::save_json(out_path, j);
    const auto m = gwr::evaluate(summaries, gwr::EvalMode::Average);
    std::cout << format_metrics_line("average", m) << "\n";
    if (diagnostic_best) {
        std::cout << format_metrics_line("best", gwr::evaluate(summaries, gwr::EvalMode::Best))
                  << "\n";
    }
    return 0;
}

int cmd_lasso(const std::string& houses_path, const std::string& features_path, double lambda,
              double split_fraction, std::uint64_t seed, const std::string& out_path) {
    const auto houses = gwr::load_dataset(houses_path, features_path);
    auto [train_houses, test_houses] = gwr::split(houses, split_fraction, seed);
    gwr::require_untainted(train_houses, "lasso fit");

    const auto dim = train_houses.front().features.size();
    Eigen::MatrixXd xtr(train_houses.size(), dim), xte(test_houses.size(), dim);
    Eigen::VectorXd ytr(train_houses.size());
    for (std::size_t i = 0; i < train_houses.size(); ++i) {
        xtr.row(static_cast<Eigen::Index>(i)) = train_houses[i].features.transpose();
        ytr[static_cast<Eigen::Index>(i)] = train_houses[i].price;
    }
    for (std::size_t i = 0; i < test_houses.size(); ++i) {
        xte.row(static_cast<Eigen::Index>(i)) = test_houses[i].features.transpose();
    }
    const auto stats = gwr::normalize_fit(xtr);
    gwr::normalize_apply(xte, stats);

    gwr::LassoConfig lcfg;
    lcfg.lambda = lambda;
    lcfg.seed = seed;
    const auto fit = gwr::lasso_fit(xtr, ytr, lcfg);
    const Eigen::VectorXd pred = gwr::lasso_predict(fit, xte);

    gwr::Metrics m;
    for (std::size_t i = 0; i < test_houses.size(); ++i) {
        const double t = test_houses[i].price;
        m.mae += std::abs(t - pred[static_cast<Eigen::Index>(i)]);
        m.mape += std::abs(t - pred[static_cast<Eigen::Index>(i)]) / t;
    }
    m.mae /= static_cast<double>(test_houses.size());
    m.mape /= static_cast<double>(test_houses.size());

    ordered_json j;
    j["mode"] = "lasso";
    j["mae"] = m.mae;
    j["mape_percent"] = m.mape * 100.0;
    j["n_houses"] = test_houses.size();
    j["lambda"] = fit.lambda;
    j["sweeps"] = fit.sweeps;
    j["converged"] = fit.converged;
    gwr::save_json(out_path, j);
    std::cout << format_metrics_line("lasso", m) << "\n";
    return 0;
}

int cmd_bench(const gwr::BenchConfig& cfg, const std::string& out_dir) {
    const auto res = gwr::run_bench_dir(cfg, out_dir);
    std::cout << format_metrics_line("blstm-avg", res.blstm_avg) << "\n";
    if (cfg.diagnostic_best) {
        std::cout << format_metrics_line("blstm-best", res.blstm_best) << "\n";
    }
    std::cout << format_metrics_line("lasso", res.lasso) << "\n";
    std::cout << format_metrics_line("global-mean", res.global_mean) << "\n";
    std::cout << "train steps " << res.train_steps << ", flagged " << res.n_flagged << "/"
              << res.n_test << ", artifacts in " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-walk recurrent price regression toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = logical cores)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic city");
    std::string synth_config, synth_out = ".";
    gwr::SynthConfig sdef;
    int s_n = sdef.n_houses, s_clusters = sdef.n_clusters, s_dim = sdef.feature_dim;
    double s_rho = sdef.rho_f, s_noise = sdef.noise_frac;
    std::uint64_t s_seed = sdef.seed;
    synth->add_option("--config", synth_config, "synth config JSON");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", s_seed, "master seed");
    synth->add_option("--n-houses", s_n, "number of houses");
    synth->add_option("--clusters", s_clusters, "number of clusters");
    synth->add_option("--feature-dim", s_dim, "feature dimension");
    synth->add_option("--rho-f", s_rho, "feature-price correlation [0,1]");
    synth->add_option("--noise", s_noise, "price noise std (fraction)");

    // graph
    auto* graph = app.add_subcommand("graph", "build the similarity graph");
    std::string g_houses, g_out;
    gwr::KernelConfig g_kernel;
    std::string g_form = "squared_exponential";
    graph->add_option("--houses", g_houses, "houses.csv")->required();
    graph->add_option("--sigma", g_kernel.sigma, "kernel bandwidth, miles");
    graph->add_option("--epsilon", g_kernel.epsilon, "edge threshold, miles");
    graph->add_option("--kernel", g_form, "squared_exponential | paper_literal");
    graph->add_option("--out", g_out, "graph JSON output")->required();

    // walk
    auto* walk = app.add_subcommand("walk", "generate training walks");
    std::string w_graph, w_out;
    int w_length = 10;
    std::int64_t w_count = 200000;
    std::uint64_t w_seed = 1;
    walk->add_option("--graph", w_graph, "graph JSON")->required();
    walk->add_option("--length", w_length, "sequence length L");
    walk->add_option("--count", w_count, "number of sequences M");
    walk->add_option("--seed", w_seed, "seed");
    walk->add_option("--out", w_out, "walks text output")->required();

    // train
    auto* train = app.add_subcommand("train", "train the B-LSTM regressor");
    std::string t_houses, t_features, t_config, t_out, t_log;
    ordered_json t_flags = ordered_json::object();
    double t_lr = 0, t_sigma = 0, t_eps = 0, t_split = 0;
    int t_batch = 0, t_h1 = 0, t_h2 = 0, t_steps = 0, t_len = 0;
    std::int64_t t_m = 0;
    std::uint64_t t_seed = 0;
    train->add_option("--houses", t_houses, "houses.csv")->required();
    train->add_option("--features", t_features, "feature store (.bin or .csv)")->required();
    train->add_option("--config", t_config, "train config JSON");
    train->add_option("--out", t_out, "checkpoint output")->required();
    train->add_option("--log", t_log, "training log CSV (default <out>.log.csv)");
    train->add_option("--seed", t_seed, "seed");
    train->add_option("--batch", t_batch, "batch size");
    train->add_option("--hidden1", t_h1, "first hidden size");
    train->add_option("--hidden2", t_h2, "second hidden size");
    train->add_option("--max-steps", t_steps, "max RMSProp steps");
    train->add_option("--sequences", t_m, "number of walks M");
    train->add_option("--length", t_len, "walk length L");
    train->add_option("--lr", t_lr, "learning rate");
    train->add_option("--sigma", t_sigma, "kernel bandwidth, miles");
    train->add_option("--epsilon", t_eps, "edge threshold, miles");
    train->add_option("--split-fraction", t_split, "training fraction");

    // predict
    auto* predict = app.add_subcommand("predict", "predict test houses");
    std::string p_model, p_houses, p_features, p_out;
    int p_per_test = 100;
    bool p_best = false;
    predict->add_option("--model", p_model, "checkpoint")->required();
    predict->add_option("--houses", p_houses, "houses.csv")->required();
    predict->add_option("--features", p_features, "feature store")->required();
    predict->add_option("--per-test", p_per_test, "sequences per test house");
    predict->add_flag("--diagnostic-best", p_best, "include ground-truth-peeking best column");
    predict->add_option("--out", p_out, "predictions CSV output")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "compute metrics from predictions");
    std::string e_pred, e_out;
    int e_groups = 3;
    bool e_best = false;
    eval->add_option("--predictions", e_pred, "predictions CSV")->required();
    eval->add_option("--groups", e_groups, "confidence groups");
    eval->add_flag("--diagnostic-best", e_best, "also report the best-mode upper bound");
    eval->add_option("--out", e_out, "metrics JSON output")->required();

    // lasso
    auto* lasso = app.add_subcommand("lasso", "LASSO baseline on pooled features");
    std::string l_houses, l_features, l_out;
    double l_lambda = -1.0, l_split = 0.8;
    std::uint64_t l_seed = 1;
    lasso->add_option("--houses", l_houses, "houses.csv")->required();
    lasso->add_option("--features", l_features, "feature store")->required();
    lasso->add_option("--lambda", l_lambda, "L1 penalty (default: 5-fold CV)");
    lasso->add_option("--split-fraction", l_split, "training fraction");
    lasso->add_option("--seed", l_seed, "seed");
    lasso->add_option("--out", l_out, "metrics JSON output")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "end-to-end synthetic benchmark");
    std::string b_config, b_manifest, b_out;
    std::uint64_t b_seed = 1;
    int b_per_test = 0, b_n = 0, b_steps = 0;
    bool b_best = false;
    bench->add_option("--config", b_config, "bench config JSON");
    bench->add_option("--from-manifest", b_manifest, "re-run from a manifest.json");
    bench->add_option("--seed", b_seed, "master seed");
    bench->add_option("--out", b_out, "output directory")->required();
    bench->add_option("--per-test", b_per_test, "sequences per test house");
    bench->add_option("--n-houses", b_n, "city size");
    bench->add_option("--max-steps", b_steps, "max training steps");
    bench->add_flag("--diagnostic-best", b_best, "report the best-mode upper bound");

    try {
        app.parse(argc, argv);
        gwr::set_threads(threads);

        if (*synth) {
            ordered_json flags = ordered_json::object();
            overlay(synth, "--seed", flags, "seed", s_seed);
            overlay(synth, "--n-houses", flags, "n_houses", s_n);
            overlay(synth, "--clusters", flags, "n_clusters", s_clusters);
            overlay(synth, "--feature-dim", flags, "feature_dim", s_dim);
            overlay(synth, "--rho-f", flags, "rho_f", s_rho);
            overlay(synth, "--noise", flags, "noise_frac", s_noise);
            return cmd_synth(synth_config, flags, synth_out);
        }
        if (*graph) {
            if (g_form == "paper_literal") {
                g_kernel.form = gwr::KernelForm::PaperLiteral;
            } else if (g_form != "squared_exponential") {
                throw gwr::InvalidInput("unknown kernel form: " + g_form);
            }
            return cmd_graph(g_houses, g_kernel, g_out);
        }
        if (*walk) return cmd_walk(w_graph, w_length, w_count, w_seed, w_out);
        if (*train) {
            ordered_json flags = ordered_json::object();
            overlay(train, "--seed", flags, "seed", t_seed);
            overlay(train, "--batch", flags, "batch_size", t_batch);
            overlay(train, "--hidden1", flags, "hidden1", t_h1);
            overlay(train, "--hidden2", flags, "hidden2", t_h2);
            overlay(train, "--max-steps", flags, "max_steps", t_steps);
            overlay(train, "--sequences", flags, "num_sequences", t_m);
            overlay(train, "--length", flags, "walk_length", t_len);
            overlay(train, "--lr", flags, "lr", t_lr);
            overlay(train, "--sigma", flags, "sigma", t_sigma);
            overlay(train, "--epsilon", flags, "epsilon", t_eps);
            overlay(train, "--split-fraction", flags, "split_fraction", t_split);
            const auto cfg = resolve_train_config(t_config, flags);
            return cmd_train(t_houses, t_features, cfg, t_out, t_log);
        }
        if (*predict) {
            return cmd_predict(p_model, p_houses, p_features, p_per_test, p_best, p_out);
        }
        if (*eval) return cmd_eval(e_pred, e_groups, e_best, e_out);
        if (*lasso) return cmd_lasso(l_houses, l_features, l_lambda, l_split, l_seed, l_out);
        if (*bench) {
            gwr::BenchConfig cfg;
            if (!b_manifest.empty()) {
                const auto m = gwr::load_json(b_manifest);
                if (!m.contains("config")) {
                    throw gwr::InvalidInput("manifest lacks a config section: " + b_manifest);
                }
                cfg = gwr::bench_config_from_json(m.at("config"));
            } else if (!b_config.empty()) {
                cfg = gwr::bench_config_from_json(gwr::load_json(b_config));
            }
            if (bench->count("--seed") > 0) cfg.seed = b_seed;
            if (bench->count("--per-test") > 0) cfg.per_test = b_per_test;
            if (bench->count("--n-houses") > 0) cfg.synth.n_houses = b_n;
            if (bench->count("--max-steps") > 0) cfg.train.max_steps = b_steps;
            if (bench->count("--diagnostic-best") > 0) cfg.diagnostic_best = b_best;
            cfg.apply_seed();
            return cmd_bench(cfg, b_out);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        print_error("invalid_input", e.what());
        return 2;
    } catch (const gwr::InvalidInput& e) {
        print_error("invalid_input", e.what());
        return 2;
    } catch (const gwr::LeakageError& e) {
        print_error("leakage", e.what());
        return 2;
    } catch (const gwr::NumericalFailure& e) {
        print_error("numerical_failure", e.what());
        return 3;
    } catch (const gwr::IoError& e) {
        print_error("io_error", e.what());
        return 4;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
}
