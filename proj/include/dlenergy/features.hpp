#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dlenergy/arch.hpp"
#include "dlenergy/dataset.hpp"
#include "dlenergy/error.hpp"
#include "dlenergy/macs.hpp"

namespace dlenergy {

enum class FeatureSetKind {
    ParameterSet,        // layer parameters
    LogParameterSet,     // parameters + ln(1 + parameter)
    MacOnly,             // MAC count alone
    ParameterMacSet,     // parameters + MAC count
    LogParameterMacSet,  // parameters + logs + MAC count
};

std::string_view to_string(FeatureSetKind kind) noexcept;
FeatureSetKind parse_feature_set(std::string_view text);
bool contains_macs(FeatureSetKind kind) noexcept;

struct PolynomialSpec {
    int degree = 1;
    bool interaction_only = false;

    bool operator==(const PolynomialSpec&) const = default;
};

/// "d=2, ito" style label; empty for degree 1.
std::string to_string(const PolynomialSpec& poly);

enum class ScalerKind { None, ZScore, MinMax };

std::string_view to_string(ScalerKind kind) noexcept;
ScalerKind parse_scaler_kind(std::string_view text);

/// Parameter columns for a layer kind, in a fixed order.
const std::vector<std::string>& parameter_names(LayerKind kind);
std::vector<double> parameter_values(const LayerConfig& config);

/// Unexpanded feature columns: parameters, then their logs, then `macs`.
std::vector<std::string> base_feature_names(LayerKind kind, FeatureSetKind set);
std::vector<double> base_features(const LayerConfig& config, MacCount macs, FeatureSetKind set);

/// Monomials of total degree 1..d over `columns` inputs as sorted index
/// lists, graded then lexicographic. Interaction-only excludes repeated
/// indices. Throws DegreeOutOfRange outside [1, 4].
std::vector<std::vector<std::size_t>> polynomial_terms(std::size_t columns, const PolynomialSpec& poly);
std::vector<double> expand_polynomial(std::span<const double> row, const PolynomialSpec& poly);
std::vector<std::string> expand_names(const std::vector<std::string>& names, const PolynomialSpec& poly);

/// Frozen per-column statistics.
///
/// ZScore: x' = (x - mean) / std over the kept columns; columns with zero
/// population std are dropped. MinMax (targets): y' = (y - min) / (max - min).
struct ScalerParams {
    ScalerKind kind = ScalerKind::None;
    bool fitted = false;
    std::size_t input_columns = 0;
    std::vector<std::size_t> kept;  // input column indices that survive
    std::vector<double> center;     // mean (zscore) or min (minmax), per kept column
    std::vector<double> scale;      // std (zscore) or max - min (minmax), per kept column

    bool operator==(const ScalerParams&) const = default;
};

ScalerParams fit_feature_scaler(const Eigen::MatrixXd& x, ScalerKind kind, const std::vector<std::string>& names,
                                Diagnostics* diag = nullptr);
ScalerParams fit_target_scaler(const Eigen::VectorXd& y);

Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& x, const ScalerParams& params);
std::vector<double> apply_scalers(std::span<const double> row, const ScalerParams& params);
double transform_target(double joules, const ScalerParams& params);
/// Linear in its argument: values outside [0, 1] extrapolate, no clipping.
double invert_target(double normalized, const ScalerParams& params);

struct FeaturePipeline {
    FeatureSetKind set = FeatureSetKind::MacOnly;
    PolynomialSpec poly;
    ScalerKind feature_scaler = ScalerKind::ZScore;

    bool operator==(const FeaturePipeline&) const = default;
};

/// Z-score when parameters sit next to the MAC count (very different
/// scales); everything else is left unscaled.
ScalerKind default_feature_scaler(FeatureSetKind set) noexcept;

struct DesignMatrix {
    std::vector<std::string> column_names;
    Eigen::MatrixXd x;  // n x p
    Eigen::VectorXd y;  // normalized target, n
};

/// Everything needed to turn a config into a model input row.
struct FittedFeatures {
    LayerKind kind = LayerKind::Conv2d;
    FeaturePipeline pipeline;
    std::vector<std::string> expanded_names;  // before column dropping
    ScalerParams feature_scaler;
    ScalerParams target_scaler;

    std::vector<std::string> column_names() const;
    std::vector<double> row(const LayerConfig& config, MacCount macs) const;
    bool operator==(const FittedFeatures&) const = default;
};

struct BuiltDesign {
    DesignMatrix design;
    FittedFeatures features;
};

/// Fits both scalers on `records` and returns the training design. Records
/// must share one layer kind. Throws EmptyRecords, KindMismatch, NonFinite.
BuiltDesign build_design(const std::vector<MeasurementRecord>& records, const FeaturePipeline& pipeline,
                         Diagnostics* diag = nullptr);

/// Design for other records under already-fitted scalers.
DesignMatrix transform_records(const std::vector<MeasurementRecord>& records, const FittedFeatures& features);

}  // namespace dlenergy
