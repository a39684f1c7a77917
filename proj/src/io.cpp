#include "gwr/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gwr/errors.hpp"

namespace gwr {

namespace {

constexpr char kFeatureMagic[5] = {'G', 'W', 'R', 'F', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    buf.append(b, 4);
}

void put_u16(std::string& buf, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    buf.append(b, 2);
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
    if (pos + 4 > buf.size()) throw IoError("feature store truncated");
    auto b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t get_u16(const std::string& buf, std::size_t& pos) {
    if (pos + 2 > buf.size()) throw IoError("feature store truncated");
    auto b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 2;
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError("bad numeric field '" + s + "' in " + context);
    }
}

}  // namespace

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp);
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw IoError("rename failed: " + tmp + " -> " + path);
    }
}

nlohmann::ordered_json load_json(const std::string& path) {
    try {
        return nlohmann::ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("bad JSON in " + path + ": " + e.what());
    }
}

void save_json(const std::string& path, const nlohmann::ordered_json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

std::vector<HouseRow> load_house_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError("empty house csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,lat,lon,price") {
        throw IoError("house csv must start with header 'id,lat,lon,price', got '" + line + "'");
    }
    std::vector<HouseRow> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
        }
        const std::string ctx = path + ":" + std::to_string(lineno);
        rows.push_back({fields[0], parse_double(fields[1], ctx), parse_double(fields[2], ctx),
                        parse_double(fields[3], ctx)});
    }
    return rows;
}

void save_house_csv(const std::string& path, const std::vector<House>& houses) {
    std::string buf = "id,lat,lon,price\n";
    char line[256];
    for (const auto& h : houses) {
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g\n", h.id.c_str(), h.location.lat,
                      h.location.lon, h.price);
        buf += line;
    }
    atomic_write(path, buf);
}

void save_feature_store(const std::string& path, const FeatureTable& t) {
    if (static_cast<Eigen::Index>(t.ids.size()) != t.values.rows()) {
        throw InvalidInput("feature table: ids/rows mismatch");
    }
    std::string buf;
    buf.append(kFeatureMagic, 5);
    put_u32(buf, static_cast<std::uint32_t>(t.ids.size()));
    put_u32(buf, static_cast<std::uint32_t>(t.values.cols()));
    for (const auto& id : t.ids) {
        if (id.size() > 0xffff) throw InvalidInput("feature id too long: " + id);
        put_u16(buf, static_cast<std::uint16_t>(id.size()));
        buf.append(id);
    }
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
            const float v = static_cast<float>(t.values(r, c));
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(buf, bits);
        }
    }
    atomic_write(path, buf);
}

namespace {

FeatureTable load_feature_bin(const std::string& buf, const std::string& path) {
    std::size_t pos = 5;
    const std::uint32_t count = get_u32(buf, pos);
    const std::uint32_t dim = get_u32(buf, pos);
    FeatureTable t;
    t.ids.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t len = get_u16(buf, pos);
        if (pos + len > buf.size()) throw IoError("feature store truncated: " + path);
        t.ids.emplace_back(buf.data() + pos, len);
        pos += len;
    }
    t.values.resize(count, dim);
    for (std::uint32_t r = 0; r < count; ++r) {
        for (std::uint32_t c = 0; c < dim; ++c) {
            const std::uint32_t bits = get_u32(buf, pos);
            float v;
            std::memcpy(&v, &bits, 4);
            t.values(r, c) = static_cast<double>(v);
        }
    }
    if (pos != buf.size()) throw IoError("feature store has trailing bytes: " + path);
    return t;
}

FeatureTable load_feature_csv_text(const std::string& buf, const std::string& path) {
    std::stringstream f(buf);
    std::string line;
    if (!std::getline(f, line)) throw IoError("empty feature csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.empty() || header[0] != "id") {
        throw IoError("feature csv must start with 'id,f0,...': " + path);
    }
    const std::size_t dim = header.size() - 1;
    FeatureTable t;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != dim + 1) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim + 1) + " fields");
        }
        t.ids.push_back(fields[0]);
        std::vector<double> vals(dim);
        for (std::size_t c = 0; c < dim; ++c) {
            vals[c] = parse_double(fields[c + 1], path + ":" + std::to_string(lineno));
        }
        rows.push_back(std::move(vals));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) t.values(r, c) = rows[r][c];
    }
    return t;
}

}  // namespace

FeatureTable load_feature_store(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() >= 5 && std::memcmp(buf.data(), kFeatureMagic, 5) == 0) {
        return load_feature_bin(buf, path);
    }
    return load_feature_csv_text(buf, path);
}

void save_feature_csv(const std::string& path, const FeatureTable& t) {
    std::string buf = "id";
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) buf += ",f" + std::to_string(c);
    buf += "\n";
    char num[64];
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
        buf += t.ids[r];
        for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
            std::snprintf(num, sizeof(num), ",%.17g", t.values(r, c));
            buf += num;
        }
        buf += "\n";
    }
    atomic_write(path, buf);
}

nlohmann::ordered_json graph_to_json(const SimilarityGraph& g, const KernelConfig& cfg,
                                     const std::vector<std::string>& node_ids,
                                     int distance_fallbacks) {
    const auto report = summarize_graph(g, distance_fallbacks);
    nlohmann::ordered_json j;
    j["node_count"] = report.node_count;
    j["edge_count"] = report.edge_count;
    auto iso = nlohmann::ordered_json::array();
    for (int i : report.isolated) {
        if (!node_ids.empty()) {
            iso.push_back(node_ids[i]);
        } else {
            iso.push_back(i);
        }
    }
    j["isolated_nodes"] = iso;
    j["mean_degree"] = report.mean_degree;
    j["sigma"] = cfg.sigma;
    j["epsilon"] = cfg.epsilon;
    j["kernel_form"] = cfg.form == KernelForm::PaperLiteral ? "paper_literal" : "squared_exponential";
    j["train_count"] = g.train_count();
    if (!node_ids.empty()) j["ids"] = node_ids;
    auto pts = nlohmann::ordered_json::array();
    for (int i = 0; i < g.node_count(); ++i) {
        pts.push_back({g.point(i).lat, g.point(i).lon});
    }
    j["points"] = pts;
    auto edges = nlohmann::ordered_json::array();
    for (int i = 0; i < g.node_count(); ++i) {
        for (const auto& nb : g.neighbors(i)) {
            if (nb.to > i) edges.push_back({i, nb.to, nb.weight});
        }
    }
    j["edges"] = edges;
    return j;
}

std::pair<SimilarityGraph, std::vector<std::string>> graph_from_json(
    const nlohmann::ordered_json& j) {
    try {
        const int n = j.at("node_count").get<int>();
        const int train_count = j.at("train_count").get<int>();
        std::vector<GeoPoint> points;
        points.reserve(n);
        for (const auto& p : j.at("points")) {
            points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        }
        if (static_cast<int>(points.size()) != n) throw IoError("graph json: points/node_count mismatch");
        std::vector<std::vector<Neighbor>> adj(n);
        for (const auto& e : j.at("edges")) {
            const int a = e.at(0).get<int>();
            const int b = e.at(1).get<int>();
            const double w = e.at(2).get<double>();
            adj[a].push_back({b, w});
            adj[b].push_back({a, w});
        }
        std::vector<std::string> ids;
        if (j.contains("ids")) ids = j.at("ids").get<std::vector<std::string>>();
        return {graph_from_edges(std::move(points), train_count, adj), std::move(ids)};
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("graph json malformed: ") + e.what());
    }
}

}  // namespace gwr
