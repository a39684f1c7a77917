#include "gwr/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gwr/errors.hpp"
#include "gwr/rng.hpp"

namespace gwr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

double objective(const MatrixXd& xc, const VectorXd& yc, const VectorXd& w, double lambda) {
    const double n = static_cast<double>(xc.rows());
    return (yc - xc * w).squaredNorm() / (2.0 * n) + lambda * w.lpNorm<1>();
}

// Core solver on pre-centered data (column means of xc and mean of yc are 0).
VectorXd descend(const MatrixXd& xc, const VectorXd& yc, double lambda, double tol,
                 int max_sweeps, int* sweeps_out, bool* converged_out,
                 std::vector<double>* obj_path) {
    const auto n = xc.rows();
    const auto d = xc.cols();
    const double nn = static_cast<double>(n);

    // z_j = <x_j, x_j>/n; zero columns stay at weight 0
    VectorXd col_sq(d);
    for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = xc.col(j).squaredNorm() / nn;

    VectorXd w = VectorXd::Zero(d);
    VectorXd residual = yc;  // yc - xc*w
    bool converged = false;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (col_sq[j] == 0.0) continue;
            const double w_old = w[j];
            const double rho = xc.col(j).dot(residual) / nn + col_sq[j] * w_old;
            const double w_new = soft_threshold(rho, lambda) / col_sq[j];
            if (w_new != w_old) {
                residual += xc.col(j) * (w_old - w_new);
                w[j] = w_new;
                max_change = std::max(max_change, std::abs(w_new - w_old));
            }
        }
        if (obj_path) obj_path->push_back(objective(xc, yc, w, lambda));
        if (max_change < tol) {
            converged = true;
            ++sweep;
            break;
        }
    }
    if (sweeps_out) *sweeps_out = sweep;
    if (converged_out) *converged_out = converged;
    return w;
}

struct Centered {
    MatrixXd x;
    VectorXd y;
    Eigen::RowVectorXd x_mean;
    double y_mean;
};

Centered center(const MatrixXd& x, const VectorXd& y) {
    Centered c;
    c.x_mean = x.colwise().mean();
    c.y_mean = y.mean();
    c.x = x.rowwise() - c.x_mean;
    c.y = y.array() - c.y_mean;
    return c;
}

}  // namespace

double lasso_lambda_max(const MatrixXd& x, const VectorXd& y) {
    const auto c = center(x, y);
    // per-column dot products, the exact expression the descent evaluates,
    // so lambda >= lambda_max zeroes every coordinate bitwise
    double lmax = 0.0;
    for (Eigen::Index j = 0; j < c.x.cols(); ++j) {
        lmax = std::max(lmax, std::abs(c.x.col(j).dot(c.y)) / static_cast<double>(x.rows()));
    }
    return lmax;
}

double lasso_cv_lambda(const MatrixXd& x, const VectorXd& y, const LassoConfig& cfg) {
    const auto n = x.rows();
    if (n < cfg.cv_folds) throw InvalidInput("lasso_cv_lambda: fewer rows than folds");

    const double lmax = lasso_lambda_max(x, y);
    if (lmax <= 0.0) return 0.0;
    std::vector<double> grid(cfg.cv_grid_size);
    for (int k = 0; k < cfg.cv_grid_size; ++k) {
        grid[k] = lmax * std::pow(1e-3, static_cast<double>(k) / (cfg.cv_grid_size - 1));
    }

    std::vector<int> fold(n);
    for (Eigen::Index i = 0; i < n; ++i) fold[i] = static_cast<int>(i % cfg.cv_folds);
    auto rng = rng::stream(cfg.seed, rng::kLassoCv);
    std::shuffle(fold.begin(), fold.end(), rng);

    std::vector<double> mse(grid.size(), 0.0);
    for (int k = 0; k < cfg.cv_folds; ++k) {
        std::vector<Eigen::Index> tr, va;
        for (Eigen::Index i = 0; i < n; ++i) (fold[i] == k ? va : tr).push_back(i);
        MatrixXd xtr(tr.size(), x.cols()), xva(va.size(), x.cols());
        VectorXd ytr(tr.size()), yva(va.size());
        for (std::size_t i = 0; i < tr.size(); ++i) xtr.row(i) = x.row(tr[i]), ytr[i] = y[tr[i]];
        for (std::size_t i = 0; i < va.size(); ++i) xva.row(i) = x.row(va[i]), yva[i] = y[va[i]];

        const auto c = center(xtr, ytr);
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            VectorXd w = descend(c.x, c.y, grid[gi], cfg.tol, cfg.max_sweeps, nullptr, nullptr,
                                 nullptr);
            const double b = c.y_mean - c.x_mean.dot(w);
            mse[gi] += (yva - (xva * w).array().matrix() - VectorXd::Constant(yva.size(), b))
                           .squaredNorm() /
                       static_cast<double>(va.size());
        }
    }
    std::size_t best = 0;
    for (std::size_t gi = 1; gi < mse.size(); ++gi) {
        if (mse[gi] < mse[best]) best = gi;
    }
    return grid[best];
}

LassoFit lasso_fit(const MatrixXd& x, const VectorXd& y, const LassoConfig& cfg) {
    if (x.rows() != y.size()) throw InvalidInput("lasso_fit: X/y row mismatch");
    if (x.rows() < 2) throw InvalidInput("lasso_fit: need at least 2 rows");

    LassoFit fit;
    fit.lambda = cfg.lambda >= 0.0 ? cfg.lambda : lasso_cv_lambda(x, y, cfg);

    const auto c = center(x, y);
    fit.weights = descend(c.x, c.y, fit.lambda, cfg.tol, cfg.max_sweeps, &fit.sweeps,
                          &fit.converged, &fit.objective_per_sweep);
    fit.intercept = c.y_mean - c.x_mean.dot(fit.weights);
    return fit;
}

VectorXd lasso_predict(const LassoFit& fit, const MatrixXd& x) {
    return (x * fit.weights).array() + fit.intercept;
}

}  // namespace gwr
