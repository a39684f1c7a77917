#include "gwr/bench.hpp"

#include <chrono>
#include <filesystem>

#include "gwr/errors.hpp"
#include "gwr/io.hpp"

namespace gwr {

BenchConfig::BenchConfig() {
    // desk-scale training: small feature dim, compact net, a few thousand
    // RMSProp steps with validation early stopping; minutes, not hours
    train.num_sequences = 24000;
    train.batch_size = 256;
    train.hidden1 = 64;
    train.hidden2 = 32;
    train.max_steps = 3000;
    train.val_fraction = 0.1;
    apply_seed();
}

void BenchConfig::apply_seed() {
    // streams are separated by purpose tags, so stages share the master seed
    synth.seed = seed;
    train.seed = seed;
}

nlohmann::ordered_json metrics_json(std::span<const PredictionSummary> summaries, EvalMode mode,
                                    int groups, bool diagnostic_best) {
    const Metrics m = evaluate(summaries, mode);
    int flagged = 0;
    for (const auto& s : summaries) flagged += s.flagged ? 1 : 0;

    nlohmann::ordered_json j;
    j["mode"] = mode == EvalMode::Best ? "best" : "average";
    j["mae"] = m.mae;
    j["mape_percent"] = m.mape * 100.0;
    j["n_houses"] = summaries.size();
    j["n_flagged"] = flagged;
    auto per_group = nlohmann::ordered_json::array();
    if (groups >= 1 && static_cast<int>(summaries.size()) >= groups) {
        for (const auto& g : confidence_groups(summaries, groups)) {
            per_group.push_back({{"index", g.index},
                                 {"n", g.n},
                                 {"mae", g.metrics.mae},
                                 {"mape_percent", g.metrics.mape * 100.0}});
        }
    }
    j["per_group"] = per_group;
    if (diagnostic_best) {
        const Metrics b = evaluate(summaries, EvalMode::Best);
        j["best"] = {{"mae", b.mae}, {"mape_percent", b.mape * 100.0}};
    }
    return j;
}

namespace {

struct StageClock {
    std::chrono::steady_clock::time_point last = std::chrono::steady_clock::now();
    nlohmann::ordered_json timings = nlohmann::ordered_json::object();

    void lap(const char* stage) {
        const auto now = std::chrono::steady_clock::now();
        timings[stage] = std::chrono::duration<double, std::milli>(now - last).count();
        last = now;
    }
};

BenchResult run(const BenchConfig& cfg, const std::string& out_dir) {
    const bool write = !out_dir.empty();
    namespace fs = std::filesystem;
    if (write) fs::create_directories(out_dir);
    auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    StageClock clock;
    BenchResult res;

    SynthTruth truth;
    const auto houses = generate(cfg.synth, &truth);
    clock.lap("synth");
    if (write) {
        save_house_csv(path("houses.csv"), houses);
        FeatureTable table;
        table.ids.reserve(houses.size());
        table.values.resize(static_cast<Eigen::Index>(houses.size()), cfg.synth.feature_dim);
        for (std::size_t i = 0; i < houses.size(); ++i) {
            table.ids.push_back(houses[i].id);
            table.values.row(static_cast<Eigen::Index>(i)) = houses[i].features.transpose();
        }
        save_feature_store(path("features.bin"), table);
        save_json(path("truth.json"), truth_to_json(cfg.synth, truth));
        clock.lap("write_synth");
    }

    auto [train_houses, test_houses] = split(houses, cfg.train.split_fraction, cfg.seed);
    clock.lap("split");

    auto trained = train(train_houses, cfg.train);
    res.train_steps = trained.steps_run;
    res.train_final_loss = trained.final_loss;
    clock.lap("train");
    if (write) {
        std::vector<std::string> ids;
        ids.reserve(trained.houses_used.size());
        for (const auto& h : trained.houses_used) ids.push_back(h.id);
        save_json(path("graph.json"), graph_to_json(trained.pipeline.graph, cfg.train.kernel, ids,
                                                    trained.graph_report.distance_fallbacks));
        save_train_log_csv(path("training_log.csv"), trained.log);
        nlohmann::ordered_json extra;
        extra["price_mean"] = trained.pipeline.price_mean;
        extra["price_std"] = trained.pipeline.price_std;
        save_checkpoint(path("model.ckpt"), trained.pipeline.model, trained.steps_run,
                        cfg.train.optimizer, extra);
        clock.lap("write_model");
    }

    res.summaries = predict(trained.pipeline, trained.houses_used, test_houses, cfg.per_test);
    res.n_test = static_cast<int>(res.summaries.size());
    for (const auto& s : res.summaries) res.n_flagged += s.flagged ? 1 : 0;
    clock.lap("predict");

    res.blstm_avg = evaluate(res.summaries, EvalMode::Average);
    res.blstm_best = evaluate(res.summaries, EvalMode::Best);
    res.groups = confidence_groups(res.summaries, cfg.groups);

    // LASSO baseline on the same split, features only
    Eigen::MatrixXd xtr(train_houses.size(), cfg.synth.feature_dim);
    Eigen::VectorXd ytr(train_houses.size());
    for (std::size_t i = 0; i < train_houses.size(); ++i) {
        xtr.row(static_cast<Eigen::Index>(i)) = train_houses[i].features.transpose();
        ytr[static_cast<Eigen::Index>(i)] = train_houses[i].price;
    }
    const FeatureStats lasso_stats = normalize_fit(xtr);
    LassoConfig lcfg;
    lcfg.seed = cfg.seed;
    const LassoFit fit = lasso_fit(xtr, ytr, lcfg);
    res.lasso_lambda = fit.lambda;

    Eigen::MatrixXd xte(test_houses.size(), cfg.synth.feature_dim);
    for (std::size_t i = 0; i < test_houses.size(); ++i) {
        xte.row(static_cast<Eigen::Index>(i)) = test_houses[i].features.transpose();
    }
    normalize_apply(xte, lasso_stats);
    const Eigen::VectorXd lasso_pred = lasso_predict(fit, xte);

    const double train_mean = trained.pipeline.price_mean;
    Metrics lm, gm;
    for (std::size_t i = 0; i < test_houses.size(); ++i) {
        const double t = test_houses[i].price;
        lm.mae += std::abs(t - lasso_pred[static_cast<Eigen::Index>(i)]);
        lm.mape += std::abs(t - lasso_pred[static_cast<Eigen::Index>(i)]) / t;
        gm.mae += std::abs(t - train_mean);
        gm.mape += std::abs(t - train_mean) / t;
    }
    const auto n = static_cast<double>(test_houses.size());
    res.lasso = {lm.mae / n, lm.mape / n};
    res.global_mean = {gm.mae / n, gm.mape / n};
    clock.lap("baselines");

    if (write) {
        save_predictions_csv(path("predictions.csv"), res.summaries, cfg.diagnostic_best);
        save_json(path("metrics.json"),
                  metrics_json(res.summaries, EvalMode::Average, cfg.groups, cfg.diagnostic_best));
        nlohmann::ordered_json baselines;
        baselines["lasso"] = {{"mae", res.lasso.mae},
                              {"mape_percent", res.lasso.mape * 100.0},
                              {"lambda", res.lasso_lambda}};
        baselines["global_mean"] = {{"mae", res.global_mean.mae},
                                    {"mape_percent", res.global_mean.mape * 100.0}};
        save_json(path("baselines.json"), baselines);
        clock.lap("write_results");

        nlohmann::ordered_json manifest;
        manifest["tool"] = "gwr";
        manifest["version"] = GWR_VERSION;
        manifest["seed"] = cfg.seed;
        manifest["config"] = bench_config_json(cfg);
        manifest["artifacts"] = {{"houses", "houses.csv"},
                                 {"features", "features.bin"},
                                 {"truth", "truth.json"},
                                 {"graph", "graph.json"},
                                 {"model", "model.ckpt"},
                                 {"training_log", "training_log.csv"},
                                 {"predictions", "predictions.csv"},
                                 {"metrics", "metrics.json"},
                                 {"baselines", "baselines.json"}};
        manifest["train_steps"] = res.train_steps;
        manifest["timings_ms"] = clock.timings;
        save_json(path("manifest.json"), manifest);
    }
    res.timings_ms = clock.timings;
    return res;
}

}  // namespace

BenchResult run_bench(const BenchConfig& cfg) {
    return run(cfg, "");
}

BenchResult run_bench_dir(const BenchConfig& cfg, const std::string& out_dir) {
    if (out_dir.empty()) throw InvalidInput("run_bench_dir: empty output directory");
    return run(cfg, out_dir);
}

nlohmann::ordered_json bench_config_json(const BenchConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["per_test"] = cfg.per_test;
    j["groups"] = cfg.groups;
    j["diagnostic_best"] = cfg.diagnostic_best;
    j["synth"] = synth_config_to_json(cfg.synth);
    j["train"] = train_config_to_json(cfg.train);
    return j;
}

BenchConfig bench_config_from_json(const nlohmann::ordered_json& j) {
    BenchConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.per_test = j.value("per_test", cfg.per_test);
        cfg.groups = j.value("groups", cfg.groups);
        cfg.diagnostic_best = j.value("diagnostic_best", cfg.diagnostic_best);
        if (j.contains("synth")) cfg.synth = synth_config_from_json(j.at("synth"));
        if (j.contains("train")) {
            // bench training defaults differ from the struct defaults, so
            // overlay the file on top of them
            auto base = train_config_to_json(cfg.train);
            for (const auto& [k, v] : j.at("train").items()) base[k] = v;
            cfg.train = train_config_from_json(base);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad bench config: ") + e.what());
    }
    cfg.apply_seed();
    return cfg;
}

}  // namespace gwr
