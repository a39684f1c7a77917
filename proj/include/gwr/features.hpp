#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gwr/geo.hpp"

namespace gwr {

struct House {
    std::string id;
    GeoPoint location;
    double price = 0.0;            // currency per sqft, > 0
    Eigen::VectorXd features;
    // Set on held-out houses at split time. Training-only code paths check
    // this flag and throw LeakageError if a test record slips through.
    bool tainted = false;
};

enum class PoolMode { Average, Max };

// Element-wise mean (Average) or maximum (Max) over per-image feature
// vectors. Throws InvalidInput on an empty list or mixed dimensions.
Eigen::VectorXd pool_house_features(const std::vector<Eigen::VectorXd>& image_features,
                                    PoolMode mode);

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // population std; 0 entries mark constant columns
};

// Column z-scoring. Fit computes stats from m (training data); constant
// columns get std 0 and map to zero. apply() reuses saved stats, e.g. for
// test rows.
FeatureStats normalize_fit(Eigen::MatrixXd& m);
void normalize_apply(Eigen::MatrixXd& m, const FeatureStats& stats);

// Joins houses.csv with a feature store (binary .bin or .csv, detected by
// content) by id. Every id must appear in both; diagnostics accumulate per
// row and the load aborts if any hard error was seen.
std::vector<House> load_dataset(const std::string& house_csv, const std::string& feature_store);

// Optional preprocessing hook: drops houses whose price deviates from the
// mean of their epsilon-neighbors by more than k times the neighbor std.
// Houses without neighbors are kept. Returns the retained houses.
std::vector<House> filter_price_outliers(const std::vector<House>& houses,
                                         const KernelConfig& kernel, double k = 3.0);

}  // namespace gwr
