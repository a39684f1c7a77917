#include "gwr/synth.hpp"

#include <cmath>

#include "gwr/errors.hpp"
#include "gwr/rng.hpp"

namespace gwr {

namespace {

// Local flat-earth conversion for laying out the city; the pipeline itself
// always measures real geodesic distances on the resulting coordinates.
constexpr double kMilesPerDegLat = 69.0;

double miles_per_deg_lon(double lat_deg) {
    return 69.171 * std::cos(lat_deg * 3.141592653589793 / 180.0);
}

}  // namespace

void SynthConfig::validate() const {
    if (n_houses < 1) throw InvalidInput("synth: n_houses must be >= 1");
    if (n_clusters < 1) throw InvalidInput("synth: n_clusters must be >= 1");
    if (!(box_miles > 0)) throw InvalidInput("synth: box_miles must be > 0");
    if (!(cluster_sigma_miles > 0)) throw InvalidInput("synth: cluster_sigma_miles must be > 0");
    if (!(base_price > 0)) throw InvalidInput("synth: base_price must be > 0");
    if (offset_frac < 0) throw InvalidInput("synth: offset_frac must be >= 0");
    if (feature_dim < 1) throw InvalidInput("synth: feature_dim must be >= 1");
    if (rho_f < 0 || rho_f > 1) throw InvalidInput("synth: rho_f must be in [0, 1]");
    if (feature_amp < 0) throw InvalidInput("synth: feature_amp must be >= 0");
    if (noise_frac < 0) throw InvalidInput("synth: noise_frac must be >= 0");
    validate_point(anchor);
}

std::vector<House> generate(const SynthConfig& cfg, SynthTruth* truth) {
    cfg.validate();

    // city-level draws (cluster layout, offsets, feature map) from stream 0
    auto city_rng = rng::stream(cfg.seed, rng::kSynth, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> center_x(cfg.n_clusters), center_y(cfg.n_clusters);
    for (int c = 0; c < cfg.n_clusters; ++c) {
        center_x[c] = unit(city_rng) * cfg.box_miles;
        center_y[c] = unit(city_rng) * cfg.box_miles;
    }
    std::vector<double> offsets(cfg.n_clusters);
    for (int c = 0; c < cfg.n_clusters; ++c) {
        offsets[c] = (2.0 * unit(city_rng) - 1.0) * cfg.offset_frac;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd fmap(cfg.feature_dim);
    for (int d = 0; d < cfg.feature_dim; ++d) fmap[d] = normal(city_rng);
    fmap.normalize();

    SynthTruth t;
    t.cluster_offset = offsets;
    t.feature_map = fmap;
    t.cluster_of.resize(cfg.n_houses);
    t.feature_component.resize(cfg.n_houses);
    t.noise.resize(cfg.n_houses);

    const double lon_scale = miles_per_deg_lon(cfg.anchor.lat);
    std::vector<House> houses(cfg.n_houses);
    for (int i = 0; i < cfg.n_houses; ++i) {
        // per-house stream keyed by index; insertion order never matters
        auto rng = rng::stream(cfg.seed, rng::kSynth, static_cast<std::uint64_t>(i) + 1);
        std::uniform_int_distribution<int> pick(0, cfg.n_clusters - 1);
        std::normal_distribution<double> scatter(0.0, cfg.cluster_sigma_miles);
        std::normal_distribution<double> feat(0.0, 1.0);
        std::normal_distribution<double> price_noise(0.0, cfg.noise_frac);

        const int c = pick(rng);
        const double x = center_x[c] + scatter(rng);
        const double y = center_y[c] + scatter(rng);

        House& h = houses[i];
        h.id = "h" + std::to_string(i);
        h.location.lat = cfg.anchor.lat + y / kMilesPerDegLat;
        h.location.lon = cfg.anchor.lon + x / lon_scale;
        h.features.resize(cfg.feature_dim);
        for (int d = 0; d < cfg.feature_dim; ++d) h.features[d] = feat(rng);

        const double fc = cfg.rho_f * cfg.feature_amp * fmap.dot(h.features);
        const double noise = price_noise(rng);
        double price = cfg.base_price * (1.0 + offsets[c] + fc + noise);
        // extreme noise draws must not produce a non-positive price
        price = std::max(price, 0.05 * cfg.base_price);
        h.price = price;

        t.cluster_of[i] = c;
        t.feature_component[i] = fc;
        t.noise[i] = noise;
    }

    if (truth) *truth = std::move(t);
    return houses;
}

nlohmann::ordered_json synth_config_to_json(const SynthConfig& cfg) {
    nlohmann::ordered_json j;
    j["n_houses"] = cfg.n_houses;
    j["n_clusters"] = cfg.n_clusters;
    j["box_miles"] = cfg.box_miles;
    j["cluster_sigma_miles"] = cfg.cluster_sigma_miles;
    j["base_price"] = cfg.base_price;
    j["offset_frac"] = cfg.offset_frac;
    j["feature_dim"] = cfg.feature_dim;
    j["rho_f"] = cfg.rho_f;
    j["feature_amp"] = cfg.feature_amp;
    j["noise_frac"] = cfg.noise_frac;
    j["anchor_lat"] = cfg.anchor.lat;
    j["anchor_lon"] = cfg.anchor.lon;
    j["seed"] = cfg.seed;
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::ordered_json& j) {
    SynthConfig cfg;
    try {
        cfg.n_houses = j.value("n_houses", cfg.n_houses);
        cfg.n_clusters = j.value("n_clusters", cfg.n_clusters);
        cfg.box_miles = j.value("box_miles", cfg.box_miles);
        cfg.cluster_sigma_miles = j.value("cluster_sigma_miles", cfg.cluster_sigma_miles);
        cfg.base_price = j.value("base_price", cfg.base_price);
        cfg.offset_frac = j.value("offset_frac", cfg.offset_frac);
        cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
        cfg.rho_f = j.value("rho_f", cfg.rho_f);
        cfg.feature_amp = j.value("feature_amp", cfg.feature_amp);
        cfg.noise_frac = j.value("noise_frac", cfg.noise_frac);
        cfg.anchor.lat = j.value("anchor_lat", cfg.anchor.lat);
        cfg.anchor.lon = j.value("anchor_lon", cfg.anchor.lon);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad synth config: ") + e.what());
    }
    return cfg;
}

nlohmann::ordered_json truth_to_json(const SynthConfig& cfg, const SynthTruth& truth) {
    nlohmann::ordered_json j;
    j["config"] = synth_config_to_json(cfg);
    j["cluster_offset"] = truth.cluster_offset;
    j["feature_map"] = std::vector<double>(truth.feature_map.data(),
                                           truth.feature_map.data() + truth.feature_map.size());
    j["cluster_of"] = truth.cluster_of;
    j["feature_component"] = truth.feature_component;
    j["noise"] = truth.noise;
    return j;
}

}  // namespace gwr
