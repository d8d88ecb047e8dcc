#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dlenergy/error.hpp"
#include "dlenergy/features.hpp"

namespace dlenergy {

enum class ModelKind { Ols, Lasso };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view text);

struct LinearModel {
    ModelKind kind = ModelKind::Ols;
    double lambda = 0.0;  // lasso only
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    int iterations = 0;     // coordinate-descent sweeps (lasso)
    bool converged = true;
    int rank = 0;           // numerical rank of the centered design (ols)

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
    double predict(std::span<const double> row) const;
};

/// Least squares with an intercept. The design is centered and its columns
/// equilibrated, then solved with a complete orthogonal decomposition so
/// that rank-deficient problems get the minimum-norm solution (and a
/// Singularity warning).
LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Diagnostics* diag = nullptr);
LinearModel fit_ols(const DesignMatrix& design, Diagnostics* diag = nullptr);

struct LassoOptions {
    double tol = 1e-8;
    int max_iter = 10000;
    /// Solve on columns divided by their population std (coefficients are
    /// mapped back afterwards), so the penalty treats columns alike.
    bool standardize = true;
};

/// Minimizes (1/2n)·||y - b0 - Xb||² + lambda·||b||₁ by cyclic coordinate
/// descent on the centered (and by default standardized) design. The intercept is not penalized. Stops
/// when no coefficient moves by more than `tol` in a sweep; on hitting
/// `max_iter` a NotConverged warning is raised and the last iterate
/// returned. `objective_trace`, if given, receives the objective after
/// every sweep.
LinearModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options = {}, Diagnostics* diag = nullptr,
                      std::vector<double>* objective_trace = nullptr);
LinearModel fit_lasso(const DesignMatrix& design, double lambda, const LassoOptions& options = {},
                      Diagnostics* diag = nullptr);

/// Smallest lambda that zeroes every coefficient: max_j |x_jᵀ(y - ȳ)| / n
/// over the centered (optionally standardized) columns.
double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool standardize = true);

struct EvalMetrics {
    double r2 = 0.0;
    double mse = 0.0;
    double max_error = 0.0;
};

/// R² about the mean of `truth`. With constant truth R² is 1 for an exact
/// fit and 0 otherwise.
EvalMetrics compute_metrics(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted);
EvalMetrics evaluate(const LinearModel& model, const DesignMatrix& design);

}  // namespace dlenergy
