#include "dlenergy/regress.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include <fmt/format.h>

namespace dlenergy {

namespace {

void check_shapes(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() == 0) throw EmptyData("cannot fit a model on zero rows");
    if (x.rows() != y.size()) {
        throw ColumnMismatch(fmt::format("design has {} rows but target has {}", x.rows(), y.size()));
    }
    if (!x.allFinite() || !y.allFinite()) throw NonFinite("design or target contains NaN or infinite values");
}

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
    return kind == ModelKind::Ols ? "ols" : "lasso";
}

ModelKind parse_model_kind(std::string_view text) {
    std::string name(text);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == "ols" || name == "linear") return ModelKind::Ols;
    if (name == "lasso") return ModelKind::Lasso;
    throw ParseError(fmt::format("unknown model kind '{}'", text));
}

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& x) const {
    if (x.cols() != coefficients.size()) {
        throw ColumnMismatch(fmt::format("model has {} coefficients, design has {} columns", coefficients.size(),
                                         x.cols()));
    }
    return (x * coefficients).array() + intercept;
}

double LinearModel::predict(std::span<const double> row) const {
    if (static_cast<Eigen::Index>(row.size()) != coefficients.size()) {
        throw ColumnMismatch(fmt::format("model has {} coefficients, row has {} values", coefficients.size(),
                                         row.size()));
    }
    double out = intercept;
    for (std::size_t j = 0; j < row.size(); ++j) out += coefficients(static_cast<Eigen::Index>(j)) * row[j];
    return out;
}

LinearModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Diagnostics* diag) {
    check_shapes(x, y);
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    // Equilibrate so the rank threshold is not dominated by column units
    // (raw MAC counts next to kernel sizes).
    Eigen::VectorXd norms = xc.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
        if (norms(j) > 0.0) xc.col(j) /= norms(j);
    }

    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
    Eigen::VectorXd beta = cod.solve(yc);

    LinearModel model;
    model.kind = ModelKind::Ols;
    model.rank = static_cast<int>(cod.rank());
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
        beta(j) = norms(j) > 0.0 ? beta(j) / norms(j) : 0.0;
    }
    if (model.rank < x.cols()) {
        warn(diag, WarningCode::Singularity,
             fmt::format("design has rank {} < {} columns; using the minimum-norm solution", model.rank, x.cols()));
    }
    if (!beta.allFinite()) throw NonFinite("least-squares solution is not finite");
    model.coefficients = std::move(beta);
    model.intercept = y_mean - x_mean.dot(model.coefficients);
    return model;
}

LinearModel fit_ols(const DesignMatrix& design, Diagnostics* diag) { return fit_ols(design.x, design.y, diag); }

namespace {

// Centered design, optionally divided by each column's population std.
struct LassoDesign {
    Eigen::RowVectorXd mean;
    Eigen::VectorXd scale;  // 1 when not standardizing or for constant columns
    Eigen::MatrixXd xc;
};

LassoDesign lasso_design(const Eigen::MatrixXd& x, bool standardize) {
    LassoDesign d;
    d.mean = x.colwise().mean();
    d.xc = x.rowwise() - d.mean;
    d.scale = Eigen::VectorXd::Ones(x.cols());
    if (standardize) {
        const auto n = static_cast<double>(x.rows());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double sd = std::sqrt(d.xc.col(j).squaredNorm() / n);
            if (sd > 0.0) {
                d.scale(j) = sd;
                d.xc.col(j) /= sd;
            }
        }
    }
    return d;
}

}  // namespace

double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool standardize) {
    check_shapes(x, y);
    const auto d = lasso_design(x, standardize);
    const Eigen::VectorXd yc = y.array() - y.mean();
    // Same per-column dot product as the first coordinate-descent sweep, so
    // fitting at exactly this value zeroes every coefficient.
    double out = 0.0;
    for (Eigen::Index j = 0; j < d.xc.cols(); ++j) {
        out = std::max(out, std::abs(d.xc.col(j).dot(yc) / static_cast<double>(x.rows())));
    }
    return out;
}

LinearModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options, Diagnostics* diag, std::vector<double>* objective_trace) {
    check_shapes(x, y);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError(fmt::format("lasso penalty must be a finite non-negative number, got {}", lambda));
    }
    const auto n = static_cast<double>(x.rows());
    const auto p = x.cols();
    const auto d = lasso_design(x, options.standardize);
    const auto& xc = d.xc;
    const double y_mean = y.mean();
    const Eigen::VectorXd col_sq = xc.colwise().squaredNorm().transpose() / n;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd residual = y.array() - y_mean;

    const auto objective = [&] { return residual.squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>(); };

    LinearModel model;
    model.kind = ModelKind::Lasso;
    model.lambda = lambda;
    model.converged = false;
    for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq(j) == 0.0) continue;  // constant column: coefficient stays 0
            const double old = beta(j);
            const double rho = xc.col(j).dot(residual) / n + col_sq(j) * old;
            const double updated = soft_threshold(rho, lambda) / col_sq(j);
            if (updated != old) {
                residual.noalias() -= (updated - old) * xc.col(j);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        model.iterations = sweep;
        if (objective_trace) objective_trace->push_back(objective());
        if (max_change < options.tol) {
            model.converged = true;
            break;
        }
    }
    if (!model.converged) {
        warn(diag, WarningCode::NotConverged,
             fmt::format("lasso (lambda={}) did not converge in {} sweeps", lambda, options.max_iter));
    }
    beta = beta.cwiseQuotient(d.scale);
    if (!beta.allFinite()) throw NonFinite("lasso solution is not finite");
    model.coefficients = std::move(beta);
    model.intercept = y_mean - d.mean.dot(model.coefficients);
    return model;
}

LinearModel fit_lasso(const DesignMatrix& design, double lambda, const LassoOptions& options, Diagnostics* diag) {
    return fit_lasso(design.x, design.y, lambda, options, diag);
}

EvalMetrics compute_metrics(const Eigen::VectorXd& truth, const Eigen::VectorXd& predicted) {
    if (truth.size() != predicted.size()) {
        throw ColumnMismatch(fmt::format("{} targets but {} predictions", truth.size(), predicted.size()));
    }
    if (truth.size() == 0) throw EmptyData("cannot evaluate on zero rows");
    const Eigen::ArrayXd residual = truth - predicted;
    EvalMetrics m;
    const double ss_res = residual.square().sum();
    const double ss_tot = (truth.array() - truth.mean()).square().sum();
    m.mse = ss_res / static_cast<double>(truth.size());
    m.max_error = residual.abs().maxCoeff();
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - ss_res / ss_tot;
    } else {
        m.r2 = ss_res == 0.0 ? 1.0 : 0.0;
    }
    return m;
}

EvalMetrics evaluate(const LinearModel& model, const DesignMatrix& design) {
    return compute_metrics(design.y, model.predict(design.x));
}

}  // namespace dlenergy
