#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace gwr {

struct LassoConfig {
    double lambda = -1.0;     // < 0: pick by 5-fold cross-validation
    double tol = 1e-7;        // max coordinate change per sweep
    int max_sweeps = 10000;
    int cv_folds = 5;
    int cv_grid_size = 50;    // log grid from lambda_max down to lambda_max*1e-3
    std::uint64_t seed = 1;   // fold assignment
};

struct LassoFit {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double lambda = 0.0;      // the lambda actually used
    int sweeps = 0;
    bool converged = true;
    std::vector<double> objective_per_sweep;
};

// Objective: (1/2n) ||y - Xw - b||^2 + lambda ||w||_1, minimized by cyclic
// coordinate descent with soft thresholding. X and y are internally centered
// so the intercept drops out of the coordinate updates; cyclic order is part
// of the definition, so this runs single-threaded. Non-convergence after
// max_sweeps returns the best iterate with converged = false.
LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoConfig& cfg);

// Smallest lambda for which the solution is exactly zero: max|X~' y~|/n over
// centered data.
double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// Mean validation MSE over a seeded fold split, evaluated on a log grid;
// returns the minimizing lambda.
double lasso_cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LassoConfig& cfg);

Eigen::VectorXd lasso_predict(const LassoFit& fit, const Eigen::MatrixXd& x);

}  // namespace gwr
