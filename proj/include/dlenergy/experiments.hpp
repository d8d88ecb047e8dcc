#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dlenergy/dataset.hpp"
#include "dlenergy/validation.hpp"

namespace dlenergy {

struct ExperimentConfig {
    PipelineSpec spec;
    bool selected = false;  // used by the default bundle
};

/// The feature-set configurations compared for Conv2d, MaxPool2d and
/// Linear. Throws MissingKind for other kinds.
std::vector<ExperimentConfig> feature_set_configurations(LayerKind kind);

struct ExperimentOptions {
    SplitSpec split;
    int cv_folds = 10;
    std::vector<double> lambda_grid = default_lambda_grid();
};

struct FeatureExperimentRow {
    LayerKind kind = LayerKind::Conv2d;
    ExperimentConfig config;
    double lambda = 0.0;  // chosen on the validation part (lasso rows)
    std::optional<CvReport> cv;
    EvalMetrics test;
};

/// Fits every configuration for `kind` on the training part (lasso
/// penalties picked on the validation part), cross-validates on the
/// training part and scores the test part.
std::vector<FeatureExperimentRow> run_feature_set_experiment(const std::vector<MeasurementRecord>& records,
                                                             LayerKind kind, const ExperimentOptions& options = {},
                                                             Diagnostics* diag = nullptr);

inline constexpr std::string_view kFeatureExperimentHeader =
    "module,feature_set,polynomial,standard_scaler,model,lambda,cv_r2_mean,cv_r2_std,cv_mse_mean,cv_mse_std,"
    "test_r2,test_mse,test_max_error,selected";
void write_feature_experiment_csv(std::ostream& out, const std::vector<FeatureExperimentRow>& rows);

struct AblationRow {
    std::uint32_t mask = 0;  // bit j set: column j of AblationResult::columns used
    int size = 0;
    bool has_macs = false;
    double r2 = 0.0;
    double mse = 0.0;
};

struct AblationResult {
    LayerKind kind = LayerKind::Conv2d;
    std::vector<std::string> columns;
    std::vector<AblationRow> rows;  // ordered by mask, 1 .. 2^p - 1

    std::string subset_name(std::uint32_t mask) const;
};

/// Fits a z-scored OLS model for every non-empty subset of the parameter,
/// log-parameter and MAC columns of `kind` (15 columns, 32767 subsets for
/// Conv2d) and scores each on the test part. Fits run in parallel; the
/// result order is fixed.
AblationResult run_ablation(const std::vector<MeasurementRecord>& records, LayerKind kind = LayerKind::Conv2d,
                            const SplitSpec& split = {}, unsigned threads = 0);

inline constexpr std::string_view kAblationHeader = "mask,size,features,has_macs,r2,mse";
void write_ablation_csv(std::ostream& out, const AblationResult& result);

}  // namespace dlenergy
