#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dlenergy/arch.hpp"
#include "dlenergy/dataset.hpp"
#include "dlenergy/validation.hpp"

namespace dlenergy {

inline constexpr int kBundleFormatVersion = 1;
inline constexpr int kEstimateFormatVersion = 1;

/// The configuration used for `kind` in the default bundle.
PipelineSpec default_pipeline(LayerKind kind);

struct PredictorModel {
    LayerKind kind = LayerKind::Conv2d;
    FittedPipeline pipeline;
    EvalMetrics train_metrics;
    EvalMetrics val_metrics;
    EvalMetrics test_metrics;
    std::optional<CvReport> cv;  // absent when the training part is too small
    std::size_t train_records = 0;
    std::size_t val_records = 0;
    std::size_t test_records = 0;

    /// Joules, possibly negative (estimate() clamps).
    double predict_joules(const LayerConfig& config, MacCount macs) const {
        return pipeline.predict_joules(config, macs);
    }
};

struct BundleMetadata {
    std::string hardware = "unknown";
    std::string dataset_fingerprint;
    std::optional<std::string> created_at;  // left empty for reproducible bytes
    std::uint64_t seed = 0;
    std::vector<std::string> energy_domains;
};

struct PredictorBundle {
    std::map<LayerKind, PredictorModel> models;
    BundleMetadata metadata;

    bool covers(LayerKind kind) const { return models.count(kind) != 0; }
    /// Throws MissingKind.
    const PredictorModel& at(LayerKind kind) const;
};

struct TrainOptions {
    SplitSpec split;
    int cv_folds = 10;  // 0 disables cross-validation
    std::vector<LayerKind> kinds = predictable_kinds();
    /// Per-kind overrides of default_pipeline().
    std::map<LayerKind, PipelineSpec> pipelines;
    BundleMetadata metadata;
};

/// Splits `records` (one kind) 70/20/10, fits on the training part and
/// records train/val/test metrics plus cross-validation on the training
/// part.
PredictorModel train_model(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec,
                           const TrainOptions& options, Diagnostics* diag = nullptr);

/// Trains one predictor per kind in options.kinds. Throws MissingKind if a
/// requested kind has no records.
PredictorBundle train_default_bundle(const std::vector<MeasurementRecord>& records, const TrainOptions& options = {},
                                     Diagnostics* diag = nullptr);

nlohmann::json to_json(const PredictorBundle& bundle);
PredictorBundle bundle_from_json(const nlohmann::json& doc);
/// Pretty-printed JSON with a trailing newline.
std::string dump_bundle(const PredictorBundle& bundle);
void save_bundle(const std::string& path, const PredictorBundle& bundle);
PredictorBundle load_bundle(const std::string& path);

struct LayerEstimate {
    std::size_t layer_index = 0;
    LayerKind kind = LayerKind::Conv2d;
    LayerConfig config;
    MacCount macs = 0;
    double predicted_joules = 0.0;
    bool clamped = false;
};

struct EnergyEstimate {
    std::string architecture;
    std::int64_t batch_size = 1;
    std::vector<LayerEstimate> layers;
    double total_joules = 0.0;  // sum of layers[i].predicted_joules in order
    MacCount total_macs = 0;
    bool any_clamped = false;
};

/// Per-layer predictions for the predictable layers of `arch` (at
/// `batch_size`, if given) and their sum. Negative predictions are clamped
/// to zero with a NegativeClamped warning.
EnergyEstimate estimate(const PredictorBundle& bundle, const ArchitectureSpec& arch,
                        std::optional<std::int64_t> batch_size = std::nullopt, Diagnostics* diag = nullptr);

nlohmann::json to_json(const EnergyEstimate& est);

struct LayerScatterPoint {
    std::string architecture;
    std::int64_t batch_size = 1;
    std::int64_t layer_index = 0;
    LayerKind kind = LayerKind::Conv2d;
    MacCount macs = 0;
    double measured_j = 0.0;
    double predicted_j = 0.0;
};

struct ModelScatterPoint {
    std::string architecture;
    std::int64_t batch_size = 1;
    MacCount total_macs = 0;
    double measured_j = 0.0;   // measured full-architecture energy
    double layer_sum_j = 0.0;  // sum of the measured per-layer energies
    double predicted_j = 0.0;  // sum of the per-layer predictions
};

struct RealEvaluation {
    std::map<LayerKind, EvalMetrics> per_kind;  // joules
    std::optional<EvalMetrics> overall;         // full architectures, joules; needs >= 1 record
    std::vector<LayerScatterPoint> layers;
    std::vector<ModelScatterPoint> models;
};

/// Compares per-layer predictions with the measured layer energies and the
/// summed predictions with the measured totals. Records whose measured
/// layer energies sum to more than 5% away from the total raise an
/// Aggregation warning. Records without layer rows are estimated from the
/// architecture name. Throws EmptyData on no records.
RealEvaluation evaluate_on_real(const PredictorBundle& bundle, const std::vector<ModelWiseRecord>& records,
                                Diagnostics* diag = nullptr);

inline constexpr std::string_view kLayerScatterHeader =
    "architecture,batch_size,layer_index,module,macs,measured_j,predicted_j";
inline constexpr std::string_view kModelScatterHeader =
    "architecture,batch_size,total_macs,measured_j,layer_sum_j,predicted_j";

void write_layer_scatter_csv(std::ostream& out, const std::vector<LayerScatterPoint>& points);
void write_model_scatter_csv(std::ostream& out, const std::vector<ModelScatterPoint>& points);

}  // namespace dlenergy
