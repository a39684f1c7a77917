#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gwr/features.hpp"
#include "gwr/graph.hpp"

namespace gwr {

// Writes content to path via a temp file + rename, so readers never observe
// a partial file.
void atomic_write(const std::string& path, const std::string& content);

nlohmann::ordered_json load_json(const std::string& path);
void save_json(const std::string& path, const nlohmann::ordered_json& j);

struct HouseRow {
    std::string id;
    double lat, lon, price;
};

// houses.csv with required header "id,lat,lon,price".
std::vector<HouseRow> load_house_csv(const std::string& path);
void save_house_csv(const std::string& path, const std::vector<House>& houses);

// Feature store, binary flavor. Layout, all little-endian:
//   magic "GWRF1" | u32 count | u32 dim | count x (u16 len, id bytes)
//   | count*dim float32, row-major by house.
struct FeatureTable {
    std::vector<std::string> ids;
    Eigen::MatrixXd values;  // rows = houses, cols = dim (widened to double)
};

void save_feature_store(const std::string& path, const FeatureTable& t);
FeatureTable load_feature_store(const std::string& path);  // .bin or .csv, sniffed

// CSV flavor: header "id,f0,f1,...".
void save_feature_csv(const std::string& path, const FeatureTable& t);

// Full graph serialization; the top-level keys include the summary schema
// {node_count, edge_count, isolated_nodes, mean_degree}.
nlohmann::ordered_json graph_to_json(const SimilarityGraph& g, const KernelConfig& cfg,
                                     const std::vector<std::string>& node_ids,
                                     int distance_fallbacks = 0);
std::pair<SimilarityGraph, std::vector<std::string>> graph_from_json(
    const nlohmann::ordered_json& j);

}  // namespace gwr
