#include "dlenergy/validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "dlenergy/parallel.hpp"
#include "dlenergy/rng.hpp"

namespace dlenergy {

namespace {

LinearModel fit_model(const DesignMatrix& design, const PipelineSpec& spec, Diagnostics* diag) {
    return spec.model == ModelKind::Ols ? fit_ols(design, diag) : fit_lasso(design, spec.lambda, spec.lasso, diag);
}

std::vector<MeasurementRecord> pick(const std::vector<MeasurementRecord>& records,
                                    const std::vector<std::size_t>& indices) {
    std::vector<MeasurementRecord> out;
    out.reserve(indices.size());
    for (const auto i : indices) out.push_back(records[i]);
    return out;
}

void mean_std(const std::vector<double>& values, double& mean, double& sd) {
    const auto n = static_cast<double>(values.size());
    mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (const auto v : values) ss += (v - mean) * (v - mean);
    sd = std::sqrt(ss / n);
}

}  // namespace

double FittedPipeline::predict_normalized(const LayerConfig& config, MacCount macs) const {
    return model.predict(features.row(config, macs));
}

double FittedPipeline::predict_joules(const LayerConfig& config, MacCount macs) const {
    return invert_target(predict_normalized(config, macs), features.target_scaler);
}

FittedPipeline fit_pipeline(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec,
                            Diagnostics* diag) {
    auto built = build_design(records, spec.features, diag);
    FittedPipeline out;
    out.spec = spec;
    out.model = fit_model(built.design, spec, diag);
    out.features = std::move(built.features);
    return out;
}

EvalMetrics evaluate_pipeline(const FittedPipeline& fitted, const std::vector<MeasurementRecord>& records) {
    if (records.empty()) throw EmptyData("no records to evaluate on");
    return evaluate(fitted.model, transform_records(records, fitted.features));
}

EvalMetrics evaluate_pipeline_joules(const FittedPipeline& fitted, const std::vector<MeasurementRecord>& records) {
    if (records.empty()) throw EmptyData("no records to evaluate on");
    const auto design = transform_records(records, fitted.features);
    const Eigen::VectorXd predicted = fitted.model.predict(design.x);
    Eigen::VectorXd truth(design.y.size());
    Eigen::VectorXd joules(design.y.size());
    for (Eigen::Index i = 0; i < design.y.size(); ++i) {
        truth(i) = records[static_cast<std::size_t>(i)].cpu_energy_j;
        joules(i) = invert_target(predicted(i), fitted.features.target_scaler);
    }
    return compute_metrics(truth, joules);
}

std::vector<std::vector<std::size_t>> cv_folds(const std::vector<MeasurementRecord>& records, int k,
                                               std::uint64_t seed) {
    if (k < 2) throw ValidationError(fmt::format("cross-validation needs k >= 2, got {}", k));
    auto groups = group_by_config(records);
    if (groups.size() < static_cast<std::size_t>(k)) {
        throw TooFewRecords(
            fmt::format("{}-fold cross-validation needs at least {} distinct configurations, got {}", k, k,
                        groups.size()));
    }
    Rng rng(seed);
    rng.shuffle(groups);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& fold = folds[g % folds.size()];
        fold.insert(fold.end(), groups[g].begin(), groups[g].end());
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

CvReport cross_validate(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec, int k,
                        std::uint64_t seed, Diagnostics* diag) {
    const auto folds = cv_folds(records, k, seed);
    CvReport report;
    report.k = k;
    report.fold_r2.assign(folds.size(), 0.0);
    report.fold_mse.assign(folds.size(), 0.0);
    parallel_for(folds.size(), [&](std::size_t f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        const auto fitted = fit_pipeline(pick(records, train_idx), spec, diag);
        const auto metrics = evaluate_pipeline(fitted, pick(records, folds[f]));
        report.fold_r2[f] = metrics.r2;
        report.fold_mse[f] = metrics.mse;
    });
    mean_std(report.fold_r2, report.mean_r2, report.std_r2);
    mean_std(report.fold_mse, report.mean_mse, report.std_mse);
    return report;
}

std::vector<double> default_lambda_grid() { return {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}; }

GridSearchResult grid_search_lambda(const std::vector<MeasurementRecord>& train,
                                    const std::vector<MeasurementRecord>& val, const PipelineSpec& spec,
                                    const std::vector<double>& grid, Diagnostics* diag) {
    if (grid.empty()) throw ValidationError("lambda grid is empty");
    const auto built = build_design(train, spec.features, diag);
    const auto val_design = transform_records(val, built.features);

    GridSearchResult result;
    result.lambdas = grid;
    result.val_r2.assign(grid.size(), 0.0);
    parallel_for(grid.size(), [&](std::size_t i) {
        const auto model = fit_lasso(built.design, grid[i], spec.lasso, diag);
        result.val_r2[i] = evaluate(model, val_design).r2;
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const bool better = result.val_r2[i] > result.val_r2[best];
        const bool tie_larger = result.val_r2[i] == result.val_r2[best] && grid[i] > grid[best];
        if (better || tie_larger) best = i;
    }
    result.best_lambda = grid[best];
    return result;
}

}  // namespace dlenergy
