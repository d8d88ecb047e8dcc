#pragma once

#include <cstdint>
#include <vector>

#include "dlenergy/dataset.hpp"
#include "dlenergy/features.hpp"
#include "dlenergy/regress.hpp"

namespace dlenergy {

/// A complete training recipe: features, scalers, regressor.
struct PipelineSpec {
    FeaturePipeline features;
    ModelKind model = ModelKind::Ols;
    double lambda = 0.0;
    LassoOptions lasso;
};

struct FittedPipeline {
    PipelineSpec spec;
    FittedFeatures features;
    LinearModel model;

    double predict_normalized(const LayerConfig& config, MacCount macs) const;
    /// Inverse-transformed to joules; may be negative (callers clamp).
    double predict_joules(const LayerConfig& config, MacCount macs) const;
};

FittedPipeline fit_pipeline(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec,
                            Diagnostics* diag = nullptr);

/// Metrics in the normalized target space of the fitted pipeline.
EvalMetrics evaluate_pipeline(const FittedPipeline& fitted, const std::vector<MeasurementRecord>& records);
/// Metrics on raw joules.
EvalMetrics evaluate_pipeline_joules(const FittedPipeline& fitted, const std::vector<MeasurementRecord>& records);

struct CvReport {
    int k = 10;
    std::vector<double> fold_r2;
    std::vector<double> fold_mse;
    double mean_r2 = 0.0;
    double std_r2 = 0.0;  // population std across folds
    double mean_mse = 0.0;
    double std_mse = 0.0;
};

/// Configuration-grouped folds: groups are shuffled with `seed` and dealt
/// round-robin. Returns record indices per fold, each fold sorted.
/// Throws TooFewRecords if there are fewer distinct configurations than k.
std::vector<std::vector<std::size_t>> cv_folds(const std::vector<MeasurementRecord>& records, int k,
                                               std::uint64_t seed);

/// k-fold cross-validation; scalers are refit on every training fold.
/// MSE is reported as a positive number.
CvReport cross_validate(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec, int k = 10,
                        std::uint64_t seed = 0, Diagnostics* diag = nullptr);

struct GridSearchResult {
    double best_lambda = 0.0;
    std::vector<double> lambdas;
    std::vector<double> val_r2;
};

/// Lasso penalties tried when none are given: 0 and 1e-6 .. 1e-1 by decade.
std::vector<double> default_lambda_grid();

/// Fits a lasso per grid value on `train` and keeps the one with the best
/// R² on `val`; ties go to the larger lambda. Throws ValidationError on an
/// empty grid.
GridSearchResult grid_search_lambda(const std::vector<MeasurementRecord>& train,
                                    const std::vector<MeasurementRecord>& val, const PipelineSpec& spec,
                                    const std::vector<double>& grid, Diagnostics* diag = nullptr);

}  // namespace dlenergy
