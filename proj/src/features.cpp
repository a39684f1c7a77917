#include "gwr/features.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "gwr/errors.hpp"
#include "gwr/graph.hpp"
#include "gwr/io.hpp"

namespace gwr {

Eigen::VectorXd pool_house_features(const std::vector<Eigen::VectorXd>& image_features,
                                    PoolMode mode) {
    if (image_features.empty()) throw InvalidInput("pool_house_features: empty image list");
    const Eigen::Index dim = image_features.front().size();
    for (const auto& v : image_features) {
        if (v.size() != dim) throw InvalidInput("pool_house_features: mixed dimensions");
    }
    if (mode == PoolMode::Max) {
        Eigen::VectorXd out = image_features.front();
        for (std::size_t i = 1; i < image_features.size(); ++i) {
            out = out.cwiseMax(image_features[i]);
        }
        return out;
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    for (const auto& v : image_features) out += v;
    return out / static_cast<double>(image_features.size());
}

FeatureStats normalize_fit(Eigen::MatrixXd& m) {
    const auto n = static_cast<double>(m.rows());
    FeatureStats stats;
    stats.mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - stats.mean.transpose();
    stats.stddev = (centered.array().square().colwise().sum() / n).sqrt();
    normalize_apply(m, stats);
    return stats;
}

void normalize_apply(Eigen::MatrixXd& m, const FeatureStats& stats) {
    if (m.cols() != stats.mean.size()) throw InvalidInput("normalize_apply: dimension mismatch");
    m.rowwise() -= stats.mean.transpose();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double s = stats.stddev[c];
        if (s > 0.0) {
            m.col(c) /= s;
        } else {
            m.col(c).setZero();  // constant column
        }
    }
}

std::vector<House> load_dataset(const std::string& house_csv, const std::string& feature_store) {
    const auto rows = load_house_csv(house_csv);
    const auto table = load_feature_store(feature_store);

    std::unordered_map<std::string, Eigen::Index> feat_index;
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        if (!feat_index.emplace(table.ids[i], static_cast<Eigen::Index>(i)).second) {
            throw InvalidInput("duplicate id in feature store: " + table.ids[i]);
        }
    }

    std::ostringstream diag;
    int hard_errors = 0;
    std::vector<House> houses;
    houses.reserve(rows.size());
    std::unordered_map<std::string, int> seen;
    for (const auto& r : rows) {
        if (!seen.emplace(r.id, 1).second) {
            diag << "duplicate house id '" << r.id << "'\n";
            ++hard_errors;
            continue;
        }
        const auto it = feat_index.find(r.id);
        if (it == feat_index.end()) {
            diag << "house '" << r.id << "' missing from feature store\n";
            ++hard_errors;
            continue;
        }
        if (!(r.price > 0.0) || !std::isfinite(r.price)) {
            diag << "house '" << r.id << "' has non-positive price " << r.price << "\n";
            ++hard_errors;
            continue;
        }
        House h;
        h.id = r.id;
        h.location = {r.lat, r.lon};
        if (!h.location.valid()) {
            diag << "house '" << r.id << "' has invalid coordinates\n";
            ++hard_errors;
            continue;
        }
        h.price = r.price;
        h.features = table.values.row(it->second).transpose();
        if (!h.features.allFinite()) {
            diag << "house '" << r.id << "' has non-finite features\n";
            ++hard_errors;
            continue;
        }
        houses.push_back(std::move(h));
    }
    for (const auto& id : table.ids) {
        if (seen.find(id) == seen.end()) {
            diag << "feature store id '" << id << "' missing from house csv\n";
            ++hard_errors;
        }
    }
    if (hard_errors > 0) {
        throw InvalidInput("load_dataset: " + std::to_string(hard_errors) + " error(s):\n" +
                           diag.str());
    }
    return houses;
}

std::vector<House> filter_price_outliers(const std::vector<House>& houses,
                                         const KernelConfig& kernel, double k) {
    if (houses.size() < 2) return houses;
    std::vector<GeoPoint> pts;
    pts.reserve(houses.size());
    for (const auto& h : houses) pts.push_back(h.location);
    const auto g = build_graph(pts, kernel);

    std::vector<House> kept;
    kept.reserve(houses.size());
    for (int i = 0; i < g.node_count(); ++i) {
        const auto nbrs = g.neighbors(i);
        if (nbrs.size() < 2) {
            kept.push_back(houses[i]);
            continue;
        }
        double sum = 0.0, sq = 0.0;
        for (const auto& nb : nbrs) {
            sum += houses[nb.to].price;
            sq += houses[nb.to].price * houses[nb.to].price;
        }
        const double n = static_cast<double>(nbrs.size());
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        const double sd = std::sqrt(var);
        if (sd == 0.0 || std::abs(houses[i].price - mean) <= k * sd) {
            kept.push_back(houses[i]);
        }
    }
    return kept;
}

}  // namespace gwr
