#include "gwr/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gwr/errors.hpp"
#include "gwr/rng.hpp"

namespace gwr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd sigmoid(const MatrixXd& m) {
    return ((-m.array()).exp() + 1.0).inverse().matrix();
}

GateParams zero_gate(int hidden, int input, bool peephole) {
    GateParams g;
    g.w_x = MatrixXd::Zero(hidden, input);
    g.w_h = MatrixXd::Zero(hidden, hidden);
    if (peephole) g.w_c = VectorXd::Zero(hidden);
    g.b = VectorXd::Zero(hidden);
    return g;
}

CellParams zero_cell(int hidden, int input) {
    CellParams c;
    c.in_g = zero_gate(hidden, input, true);
    c.forget_g = zero_gate(hidden, input, true);
    c.cand = zero_gate(hidden, input, false);
    c.out_g = zero_gate(hidden, input, true);
    return c;
}

template <typename Spans, typename P>
void collect_gate_spans(Spans& out, P& g) {
    out.emplace_back(g.w_x.data(), static_cast<std::size_t>(g.w_x.size()));
    out.emplace_back(g.w_h.data(), static_cast<std::size_t>(g.w_h.size()));
    if (g.w_c.size() > 0) out.emplace_back(g.w_c.data(), static_cast<std::size_t>(g.w_c.size()));
    out.emplace_back(g.b.data(), static_cast<std::size_t>(g.b.size()));
}

template <typename Spans, typename P>
void collect_spans(Spans& out, P& p) {
    for (auto* cell : {&p.l1_fwd, &p.l1_bwd, &p.l2_fwd, &p.l2_bwd}) {
        collect_gate_spans(out, cell->in_g);
        collect_gate_spans(out, cell->forget_g);
        collect_gate_spans(out, cell->cand);
        collect_gate_spans(out, cell->out_g);
    }
    out.emplace_back(p.head.w.data(), static_cast<std::size_t>(p.head.w.size()));
    out.emplace_back(&p.head.b, 1);
}

}  // namespace

BlstmParams BlstmParams::zeros(const ModelDims& dims) {
    BlstmParams p;
    p.l1_fwd = zero_cell(dims.hidden1, dims.input);
    p.l1_bwd = zero_cell(dims.hidden1, dims.input);
    p.l2_fwd = zero_cell(dims.hidden2, 2 * dims.hidden1);
    p.l2_bwd = zero_cell(dims.hidden2, 2 * dims.hidden1);
    p.head.w = Eigen::RowVectorXd::Zero(2 * dims.hidden2);
    p.head.b = 0.0;
    return p;
}

std::size_t BlstmParams::param_count() const {
    std::size_t n = 0;
    for (const auto& [ptr, len] : param_spans(*this)) n += len;
    return n;
}

void BlstmParams::set_zero() {
    for (auto& [ptr, len] : param_spans(*this)) std::memset(ptr, 0, len * sizeof(double));
}

bool BlstmParams::all_finite() const {
    for (const auto& [ptr, len] : param_spans(*this)) {
        for (std::size_t i = 0; i < len; ++i) {
            if (!std::isfinite(ptr[i])) return false;
        }
    }
    return true;
}

std::vector<std::pair<double*, std::size_t>> param_spans(BlstmParams& p) {
    std::vector<std::pair<double*, std::size_t>> out;
    collect_spans(out, p);
    return out;
}

std::vector<std::pair<const double*, std::size_t>> param_spans(const BlstmParams& p) {
    std::vector<std::pair<const double*, std::size_t>> out;
    collect_spans(out, p);
    return out;
}

namespace {

void init_gate(GateParams& g, std::mt19937_64& rng, bool forget) {
    auto fill = [&rng](auto& m, double r) {
        std::uniform_real_distribution<double> dist(-r, r);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    };
    fill(g.w_x, 1.0 / std::sqrt(static_cast<double>(g.w_x.cols())));
    fill(g.w_h, 1.0 / std::sqrt(static_cast<double>(g.w_h.cols())));
    if (g.w_c.size() > 0) fill(g.w_c, 1.0 / std::sqrt(static_cast<double>(g.w_c.size())));
    g.b.setConstant(forget ? 1.0 : 0.0);
}

void init_cell(CellParams& c, std::mt19937_64& rng) {
    init_gate(c.in_g, rng, false);
    init_gate(c.forget_g, rng, true);
    init_gate(c.cand, rng, false);
    init_gate(c.out_g, rng, false);
}

}  // namespace

BlstmModel init_model(const ModelDims& dims, std::uint64_t seed) {
    if (dims.input < 1 || dims.hidden1 < 1 || dims.hidden2 < 1) {
        throw InvalidInput("init_model: dims must be positive");
    }
    BlstmModel m;
    m.dims = dims;
    m.init_seed = seed;
    m.params = BlstmParams::zeros(dims);
    auto rng = rng::stream(seed, rng::kModelInit);
    init_cell(m.params.l1_fwd, rng);
    init_cell(m.params.l1_bwd, rng);
    init_cell(m.params.l2_fwd, rng);
    init_cell(m.params.l2_bwd, rng);
    // the output head starts at zero: an untrained model predicts exactly the
    // head bias, and the head picks up its scale on the first update
    m.params.head.w.setZero();
    m.params.head.b = 0.0;
    return m;
}

void lstm_step(const CellParams& cell, const VectorXd& x, const VectorXd& h_prev,
               const VectorXd& c_prev, VectorXd& h_out, VectorXd& c_out) {
    const int h = cell.hidden();
    if (x.size() != cell.input_dim() || h_prev.size() != h || c_prev.size() != h) {
        throw InvalidInput("lstm_step: shape mismatch");
    }
    VectorXd pre_i = cell.in_g.w_x * x + cell.in_g.w_h * h_prev +
                     cell.in_g.w_c.cwiseProduct(c_prev) + cell.in_g.b;
    VectorXd i = ((-pre_i.array()).exp() + 1.0).inverse();
    VectorXd pre_f = cell.forget_g.w_x * x + cell.forget_g.w_h * h_prev +
                     cell.forget_g.w_c.cwiseProduct(c_prev) + cell.forget_g.b;
    VectorXd f = ((-pre_f.array()).exp() + 1.0).inverse();
    VectorXd g = (cell.cand.w_x * x + cell.cand.w_h * h_prev + cell.cand.b).array().tanh();
    c_out = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    VectorXd pre_o = cell.out_g.w_x * x + cell.out_g.w_h * h_prev +
                     cell.out_g.w_c.cwiseProduct(c_out) + cell.out_g.b;
    VectorXd o = ((-pre_o.array()).exp() + 1.0).inverse();
    h_out = o.cwiseProduct(c_out.array().tanh().matrix());
}

namespace {

// One direction of one layer over a batch. Cache entries are indexed by
// processing step s; original position t = reverse ? T-1-s : s.
void dir_forward(const CellParams& cell, const std::vector<MatrixXd>& inputs, bool reverse,
                 DirCache& cache, std::vector<MatrixXd>& h_by_t) {
    const int steps = static_cast<int>(inputs.size());
    const auto batch = inputs[0].cols();
    const int hidden = cell.hidden();

    cache.i.resize(steps);
    cache.f.resize(steps);
    cache.g.resize(steps);
    cache.o.resize(steps);
    cache.c.resize(steps);
    cache.tc.resize(steps);
    cache.h.resize(steps);
    h_by_t.resize(steps);

    MatrixXd zero = MatrixXd::Zero(hidden, batch);
    const MatrixXd* h_prev = &zero;
    const MatrixXd* c_prev = &zero;
    for (int s = 0; s < steps; ++s) {
        const int t = reverse ? steps - 1 - s : s;
        const MatrixXd& x = inputs[t];

        MatrixXd pre_i = cell.in_g.w_x * x + cell.in_g.w_h * (*h_prev) +
                         cell.in_g.w_c.asDiagonal() * (*c_prev);
        pre_i.colwise() += cell.in_g.b;
        cache.i[s] = sigmoid(pre_i);

        MatrixXd pre_f = cell.forget_g.w_x * x + cell.forget_g.w_h * (*h_prev) +
                         cell.forget_g.w_c.asDiagonal() * (*c_prev);
        pre_f.colwise() += cell.forget_g.b;
        cache.f[s] = sigmoid(pre_f);

        MatrixXd pre_g = cell.cand.w_x * x + cell.cand.w_h * (*h_prev);
        pre_g.colwise() += cell.cand.b;
        cache.g[s] = pre_g.array().tanh();

        cache.c[s] = cache.f[s].cwiseProduct(*c_prev) + cache.i[s].cwiseProduct(cache.g[s]);

        MatrixXd pre_o = cell.out_g.w_x * x + cell.out_g.w_h * (*h_prev) +
                         cell.out_g.w_c.asDiagonal() * cache.c[s];
        pre_o.colwise() += cell.out_g.b;
        cache.o[s] = sigmoid(pre_o);

        cache.tc[s] = cache.c[s].array().tanh();
        cache.h[s] = cache.o[s].cwiseProduct(cache.tc[s]);
        h_by_t[t] = cache.h[s];

        h_prev = &cache.h[s];
        c_prev = &cache.c[s];
    }
}

// BPTT for one direction. dh_by_t is dL/dh at each original position from
// consumers above (head or next layer); param gradients accumulate into
// grads; when dx_by_t is non-null, dL/dinput accumulates there (needed to
// reach layer 1 from layer 2).
void dir_backward(const CellParams& cell, const std::vector<MatrixXd>& inputs, bool reverse,
                  const DirCache& cache, const std::vector<MatrixXd>& dh_by_t, CellParams& grads,
                  std::vector<MatrixXd>* dx_by_t) {
    const int steps = static_cast<int>(inputs.size());
    const auto batch = inputs[0].cols();
    const int hidden = cell.hidden();

    const MatrixXd zero = MatrixXd::Zero(hidden, batch);
    MatrixXd dh_next = zero;
    MatrixXd dc_next = zero;

    for (int s = steps - 1; s >= 0; --s) {
        const int t = reverse ? steps - 1 - s : s;
        const MatrixXd& h_prev = s > 0 ? cache.h[s - 1] : zero;
        const MatrixXd& c_prev = s > 0 ? cache.c[s - 1] : zero;
        const MatrixXd& x = inputs[t];

        const MatrixXd dh = dh_by_t[t] + dh_next;

        const MatrixXd& i = cache.i[s];
        const MatrixXd& f = cache.f[s];
        const MatrixXd& g = cache.g[s];
        const MatrixXd& o = cache.o[s];
        const MatrixXd& tc = cache.tc[s];

        MatrixXd d_pre_o =
            (dh.array() * tc.array() * o.array() * (1.0 - o.array())).matrix();
        MatrixXd dc = (dh.array() * o.array() * (1.0 - tc.array().square())).matrix() + dc_next +
                      cell.out_g.w_c.asDiagonal() * d_pre_o;
        MatrixXd d_pre_f =
            (dc.array() * c_prev.array() * f.array() * (1.0 - f.array())).matrix();
        MatrixXd d_pre_i = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
        MatrixXd d_pre_g = (dc.array() * i.array() * (1.0 - g.array().square())).matrix();

        dc_next = dc.cwiseProduct(f) + cell.in_g.w_c.asDiagonal() * d_pre_i +
                  cell.forget_g.w_c.asDiagonal() * d_pre_f;
        dh_next = cell.in_g.w_h.transpose() * d_pre_i + cell.forget_g.w_h.transpose() * d_pre_f +
                  cell.cand.w_h.transpose() * d_pre_g + cell.out_g.w_h.transpose() * d_pre_o;

        grads.in_g.w_x.noalias() += d_pre_i * x.transpose();
        grads.in_g.w_h.noalias() += d_pre_i * h_prev.transpose();
        grads.in_g.w_c += (d_pre_i.array() * c_prev.array()).rowwise().sum().matrix();
        grads.in_g.b += d_pre_i.rowwise().sum();

        grads.forget_g.w_x.noalias() += d_pre_f * x.transpose();
        grads.forget_g.w_h.noalias() += d_pre_f * h_prev.transpose();
        grads.forget_g.w_c += (d_pre_f.array() * c_prev.array()).rowwise().sum().matrix();
        grads.forget_g.b += d_pre_f.rowwise().sum();

        grads.cand.w_x.noalias() += d_pre_g * x.transpose();
        grads.cand.w_h.noalias() += d_pre_g * h_prev.transpose();
        grads.cand.b += d_pre_g.rowwise().sum();

        grads.out_g.w_x.noalias() += d_pre_o * x.transpose();
        grads.out_g.w_h.noalias() += d_pre_o * h_prev.transpose();
        grads.out_g.w_c += (d_pre_o.array() * cache.c[s].array()).rowwise().sum().matrix();
        grads.out_g.b += d_pre_o.rowwise().sum();

        if (dx_by_t) {
            (*dx_by_t)[t].noalias() += cell.in_g.w_x.transpose() * d_pre_i;
            (*dx_by_t)[t].noalias() += cell.forget_g.w_x.transpose() * d_pre_f;
            (*dx_by_t)[t].noalias() += cell.cand.w_x.transpose() * d_pre_g;
            (*dx_by_t)[t].noalias() += cell.out_g.w_x.transpose() * d_pre_o;
        }
    }
}

}  // namespace

MatrixXd blstm_forward(const BlstmModel& model, const std::vector<MatrixXd>& xs,
                       ForwardCache* cache) {
    if (xs.empty()) throw InvalidInput("blstm_forward: empty sequence");
    const int steps = static_cast<int>(xs.size());
    const auto batch = xs[0].cols();
    for (const auto& x : xs) {
        if (x.rows() != model.dims.input || x.cols() != batch) {
            throw InvalidInput("blstm_forward: input shape mismatch");
        }
    }

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.steps = steps;
    c.batch = static_cast<int>(batch);
    c.x = xs;

    std::vector<MatrixXd> h1f, h1b;
    dir_forward(model.params.l1_fwd, c.x, false, c.l1f, h1f);
    dir_forward(model.params.l1_bwd, c.x, true, c.l1b, h1b);

    c.u.resize(steps);
    for (int t = 0; t < steps; ++t) {
        c.u[t].resize(2 * model.dims.hidden1, batch);
        c.u[t].topRows(model.dims.hidden1) = h1f[t];
        c.u[t].bottomRows(model.dims.hidden1) = h1b[t];
    }

    std::vector<MatrixXd> h2f, h2b;
    dir_forward(model.params.l2_fwd, c.u, false, c.l2f, h2f);
    dir_forward(model.params.l2_bwd, c.u, true, c.l2b, h2b);

    c.v.resize(steps);
    c.preds.resize(steps, batch);
    for (int t = 0; t < steps; ++t) {
        c.v[t].resize(2 * model.dims.hidden2, batch);
        c.v[t].topRows(model.dims.hidden2) = h2f[t];
        c.v[t].bottomRows(model.dims.hidden2) = h2b[t];
        c.preds.row(t) = model.params.head.w * c.v[t];
        c.preds.row(t).array() += model.params.head.b;
    }
    return c.preds;
}

double loss(const MatrixXd& predictions, const MatrixXd& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw InvalidInput("loss: prediction/target shape mismatch");
    }
    if (predictions.cols() < 1) throw InvalidInput("loss: need at least one sequence");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.cols());
}

BlstmParams backward(const BlstmModel& model, const ForwardCache& cache, const MatrixXd& targets,
                     int loss_sequences) {
    if (cache.steps == 0) throw InvalidInput("backward: empty cache");
    if (targets.rows() != cache.steps || targets.cols() != cache.batch) {
        throw InvalidInput("backward: target shape mismatch");
    }
    if (loss_sequences < 1) throw InvalidInput("backward: loss_sequences must be >= 1");

    const int steps = cache.steps;
    const int h1 = model.dims.hidden1;
    const int h2 = model.dims.hidden2;

    BlstmParams grads = BlstmParams::zeros(model.dims);

    const MatrixXd d_pred = (2.0 / loss_sequences) * (cache.preds - targets);

    std::vector<MatrixXd> dh2f(steps), dh2b(steps);
    for (int t = 0; t < steps; ++t) {
        grads.head.w.noalias() += d_pred.row(t) * cache.v[t].transpose();
        grads.head.b += d_pred.row(t).sum();
        const MatrixXd dv = model.params.head.w.transpose() * d_pred.row(t);
        dh2f[t] = dv.topRows(h2);
        dh2b[t] = dv.bottomRows(h2);
    }

    std::vector<MatrixXd> du(steps, MatrixXd::Zero(2 * h1, cache.batch));
    dir_backward(model.params.l2_fwd, cache.u, false, cache.l2f, dh2f, grads.l2_fwd, &du);
    dir_backward(model.params.l2_bwd, cache.u, true, cache.l2b, dh2b, grads.l2_bwd, &du);

    std::vector<MatrixXd> dh1f(steps), dh1b(steps);
    for (int t = 0; t < steps; ++t) {
        dh1f[t] = du[t].topRows(h1);
        dh1b[t] = du[t].bottomRows(h1);
    }
    dir_backward(model.params.l1_fwd, cache.x, false, cache.l1f, dh1f, grads.l1_fwd, nullptr);
    dir_backward(model.params.l1_bwd, cache.x, true, cache.l1b, dh1b, grads.l1_bwd, nullptr);

    return grads;
}

double global_norm(const BlstmParams& grads) {
    double sum_sq = 0.0;
    for (const auto& [ptr, len] : param_spans(grads)) {
        for (std::size_t i = 0; i < len; ++i) sum_sq += ptr[i] * ptr[i];
    }
    return std::sqrt(sum_sq);
}

void clip_by_global_norm(BlstmParams& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& [ptr, len] : param_spans(grads)) {
        for (std::size_t i = 0; i < len; ++i) ptr[i] *= scale;
    }
}

RmsPropState make_rmsprop_state(const ModelDims& dims) {
    RmsPropState s;
    s.acc = BlstmParams::zeros(dims);
    return s;
}

void rmsprop_step(BlstmParams& params, const BlstmParams& grads, RmsPropState& state,
                  const RmsPropConfig& cfg) {
    auto ps = param_spans(params);
    auto gs = param_spans(grads);
    auto as = param_spans(state.acc);
    if (ps.size() != gs.size() || ps.size() != as.size()) {
        throw InvalidInput("rmsprop_step: parameter tree shape mismatch");
    }
    for (std::size_t k = 0; k < ps.size(); ++k) {
        auto [p, n] = ps[k];
        auto [g, gn] = gs[k];
        auto [a, an] = as[k];
        if (n != gn || n != an) throw InvalidInput("rmsprop_step: span length mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = cfg.rho * a[i] + (1.0 - cfg.rho) * g[i] * g[i];
            p[i] -= cfg.lr * g[i] / std::sqrt(a[i] + cfg.delta);
        }
    }
    ++state.step;
}

namespace {
constexpr char kCheckpointMagic[5] = {'G', 'W', 'R', 'C', '1'};
}

void save_checkpoint(const std::string& path, const BlstmModel& model, std::int64_t step,
                     const RmsPropConfig& opt, const nlohmann::ordered_json& extra) {
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["dims"] = {{"input", model.dims.input},
                        {"hidden1", model.dims.hidden1},
                        {"hidden2", model.dims.hidden2}};
    manifest["seed"] = model.init_seed;
    manifest["step"] = step;
    manifest["rmsprop"] = {{"rho", opt.rho}, {"lr", opt.lr}, {"delta", opt.delta}};
    manifest["param_count"] = model.params.param_count();
    if (!extra.is_null() && !extra.empty()) manifest["extra"] = extra;

    const std::string mtext = manifest.dump();
    std::string buf;
    buf.append(kCheckpointMagic, 5);
    const auto mlen = static_cast<std::uint32_t>(mtext.size());
    char lenb[4] = {static_cast<char>(mlen & 0xff), static_cast<char>((mlen >> 8) & 0xff),
                    static_cast<char>((mlen >> 16) & 0xff), static_cast<char>((mlen >> 24) & 0xff)};
    buf.append(lenb, 4);
    buf.append(mtext);
    for (const auto& [ptr, len] : param_spans(model.params)) {
        buf.append(reinterpret_cast<const char*>(ptr), len * sizeof(double));
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp);
        f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!f) throw IoError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("rename failed: " + path);
}

BlstmModel load_checkpoint(const std::string& path, nlohmann::ordered_json* manifest_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 9 || std::memcmp(buf.data(), kCheckpointMagic, 5) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    const auto b = reinterpret_cast<const unsigned char*>(buf.data() + 5);
    const std::uint32_t mlen = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
    if (buf.size() < 9 + mlen) throw IoError("checkpoint truncated: " + path);

    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(buf.substr(9, mlen));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(std::string("checkpoint manifest malformed: ") + e.what());
    }
    if (manifest.value("version", 0) != 1) {
        throw IoError("unsupported checkpoint version in " + path);
    }

    BlstmModel m;
    m.dims.input = manifest.at("dims").at("input").get<int>();
    m.dims.hidden1 = manifest.at("dims").at("hidden1").get<int>();
    m.dims.hidden2 = manifest.at("dims").at("hidden2").get<int>();
    m.init_seed = manifest.value("seed", std::uint64_t{0});
    m.params = BlstmParams::zeros(m.dims);

    const std::size_t expect = m.params.param_count();
    if (manifest.at("param_count").get<std::size_t>() != expect) {
        throw IoError("checkpoint param_count does not match dims: " + path);
    }
    const std::size_t blob_bytes = expect * sizeof(double);
    if (buf.size() != 9 + mlen + blob_bytes) {
        throw IoError("checkpoint blob size mismatch: " + path);
    }
    const char* cursor = buf.data() + 9 + mlen;
    for (auto& [ptr, len] : param_spans(m.params)) {
        std::memcpy(ptr, cursor, len * sizeof(double));
        cursor += len * sizeof(double);
    }
    if (manifest_out) *manifest_out = std::move(manifest);
    return m;
}

}  // namespace gwr
