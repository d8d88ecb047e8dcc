#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dlenergy/experiments.hpp"
#include "dlenergy/predict.hpp"

namespace dlenergy {

enum class ArtifactKind { Scatter, ContributionBars, AggregateVsTotal, AblationScatter };

std::string_view to_string(ArtifactKind kind) noexcept;
ArtifactKind parse_artifact_kind(std::string_view name);

struct PlotPoint {
    std::string series;
    double x = 0.0;
    double y = 0.0;
};

struct BarValue {
    std::string group;
    std::string category;
    double value = 0.0;
};

/// Plot data. Scatter-like kinds use `points` (ground truth on x), the bar
/// kind uses `bars`. The SVG is rendered from these fields alone, so the
/// CSV written by write_artifact_csv is enough to redraw it.
struct ReportArtifact {
    ArtifactKind kind = ArtifactKind::Scatter;
    std::string name;  // file stem, also the plot title
    std::vector<PlotPoint> points;
    std::vector<BarValue> bars;
};

inline constexpr std::string_view kPointHeader = "series,x,y";
inline constexpr std::string_view kBarHeader = "group,category,value";

/// Measured vs predicted energy per layer, one series per module.
ReportArtifact layer_scatter_artifact(const std::vector<LayerScatterPoint>& points);
/// Measured vs predicted full-architecture energy, one series per architecture.
ReportArtifact model_scatter_artifact(const std::vector<ModelScatterPoint>& points);
/// Share of each module in the measured energy of each architecture
/// (summed over batch sizes).
ReportArtifact contribution_artifact(const std::vector<LayerScatterPoint>& points);
/// Measured total vs the sum of the measured layers; points without layer
/// measurements are skipped.
ReportArtifact aggregate_artifact(const std::vector<ModelScatterPoint>& points);
/// Test R² against subset size, split by whether the subset has the MAC column.
ReportArtifact ablation_artifact(const AblationResult& result);

void write_artifact_csv(std::ostream& out, const ReportArtifact& artifact);
ReportArtifact read_artifact_csv(std::istream& in, ArtifactKind kind, std::string name);
std::string render_svg(const ReportArtifact& artifact);

/// Writes <dir>/<name>.csv and <dir>/<name>.svg; returns both paths.
std::vector<std::filesystem::path> write_artifact(const std::filesystem::path& dir, const ReportArtifact& artifact);

// Readers for the files written by evaluate and ablate.
std::vector<LayerScatterPoint> read_layer_scatter_csv(std::istream& in);
std::vector<ModelScatterPoint> read_model_scatter_csv(std::istream& in);
AblationResult read_ablation_csv(std::istream& in, LayerKind kind = LayerKind::Conv2d);

}  // namespace dlenergy
