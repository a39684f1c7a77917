#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "gwr/features.hpp"

namespace gwr {

// Synthetic city with controllable neighborhood price structure. Prices are
// additive: base * (1 + cluster offset + feature channel + noise), so the
// location channel and the feature channel can be isolated in experiments.
struct SynthConfig {
    int n_houses = 1500;
    int n_clusters = 10;
    double box_miles = 10.0;            // square city side
    double cluster_sigma_miles = 0.4;   // house scatter around cluster centers
    double base_price = 100.0;
    double offset_frac = 0.30;          // per-cluster offset ~ U(-f, f), fraction of base
    int feature_dim = 16;
    double rho_f = 0.5;                 // weight of the feature-driven price component
    double feature_amp = 0.2;           // feature channel scale, fraction of base
    double noise_frac = 0.05;           // price noise std, fraction of base
    GeoPoint anchor{43.0, -77.7};       // south-west corner of the city
    std::uint64_t seed = 1;

    void validate() const;  // throws InvalidInput
};

// Everything needed to regenerate prices exactly: the recorded noise draws
// plus per-house decomposition.
struct SynthTruth {
    std::vector<int> cluster_of;
    std::vector<double> cluster_offset;    // per cluster, fraction of base
    Eigen::VectorXd feature_map;           // unit vector; feature channel =
                                           // rho_f * feature_amp * (map . f)
    std::vector<double> feature_component; // per house, fraction of base
    std::vector<double> noise;             // per house, fraction of base
};

// Houses are scattered around uniformly placed cluster centers; features are
// iid standard normal with a known linear map into the price. House i draws
// from RNG stream (seed, kSynth, i), so generation is reproducible and
// order-independent.
std::vector<House> generate(const SynthConfig& cfg, SynthTruth* truth = nullptr);

nlohmann::ordered_json truth_to_json(const SynthConfig& cfg, const SynthTruth& truth);

// Flat JSON with keys mirroring the struct; missing keys keep defaults.
nlohmann::ordered_json synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::ordered_json& j);

}  // namespace gwr
