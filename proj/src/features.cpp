#include "dlenergy/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace dlenergy {

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool has_logs(FeatureSetKind set) {
    return set == FeatureSetKind::LogParameterSet || set == FeatureSetKind::LogParameterMacSet;
}

bool has_params(FeatureSetKind set) { return set != FeatureSetKind::MacOnly; }

void check_degree(const PolynomialSpec& poly) {
    if (poly.degree < 1 || poly.degree > 4) {
        throw DegreeOutOfRange(fmt::format("polynomial degree {} outside [1, 4]", poly.degree));
    }
}

void require_fitted(const ScalerParams& params) {
    if (!params.fitted) throw UnfittedScaler("scaler used before fitting");
}

void require_finite(const Eigen::MatrixXd& m, std::string_view what) {
    if (!m.allFinite()) throw NonFinite(fmt::format("{} contains NaN or infinite values", what));
}

}  // namespace

std::string_view to_string(FeatureSetKind kind) noexcept {
    switch (kind) {
        case FeatureSetKind::ParameterSet: return "parameter";
        case FeatureSetKind::LogParameterSet: return "log_parameter";
        case FeatureSetKind::MacOnly: return "macs";
        case FeatureSetKind::ParameterMacSet: return "parameter_macs";
        case FeatureSetKind::LogParameterMacSet: return "log_parameter_macs";
    }
    return "?";
}

FeatureSetKind parse_feature_set(std::string_view text) {
    static const std::map<std::string, FeatureSetKind> names{
        {"parameter", FeatureSetKind::ParameterSet},
        {"parameters", FeatureSetKind::ParameterSet},
        {"log_parameter", FeatureSetKind::LogParameterSet},
        {"log_parameters", FeatureSetKind::LogParameterSet},
        {"macs", FeatureSetKind::MacOnly},
        {"mac", FeatureSetKind::MacOnly},
        {"parameter_macs", FeatureSetKind::ParameterMacSet},
        {"parameter_mac", FeatureSetKind::ParameterMacSet},
        {"log_parameter_macs", FeatureSetKind::LogParameterMacSet},
        {"log_parameter_mac", FeatureSetKind::LogParameterMacSet},
    };
    const auto it = names.find(lower(text));
    if (it == names.end()) throw ParseError(fmt::format("unknown feature set '{}'", text));
    return it->second;
}

bool contains_macs(FeatureSetKind kind) noexcept {
    return kind == FeatureSetKind::MacOnly || kind == FeatureSetKind::ParameterMacSet ||
           kind == FeatureSetKind::LogParameterMacSet;
}

std::string to_string(const PolynomialSpec& poly) {
    if (poly.degree <= 1) return {};
    return fmt::format("d={}{}", poly.degree, poly.interaction_only ? ", ito" : "");
}

std::string_view to_string(ScalerKind kind) noexcept {
    switch (kind) {
        case ScalerKind::None: return "none";
        case ScalerKind::ZScore: return "zscore";
        case ScalerKind::MinMax: return "minmax";
    }
    return "?";
}

ScalerKind parse_scaler_kind(std::string_view text) {
    const auto name = lower(text);
    if (name == "none") return ScalerKind::None;
    if (name == "zscore" || name == "z-score" || name == "standard") return ScalerKind::ZScore;
    if (name == "minmax" || name == "min-max") return ScalerKind::MinMax;
    throw ParseError(fmt::format("unknown scaler '{}'", text));
}

const std::vector<std::string>& parameter_names(LayerKind kind) {
    static const std::vector<std::string> conv{"batch_size", "image_size", "kernel_size", "in_channels",
                                               "out_channels", "stride", "padding"};
    static const std::vector<std::string> pool{"batch_size", "image_size", "kernel_size",
                                               "in_channels", "stride", "padding"};
    static const std::vector<std::string> linear{"batch_size", "in_channels", "out_channels"};
    static const std::vector<std::string> activation{"batch_size", "in_channels"};
    switch (kind) {
        case LayerKind::Conv2d: return conv;
        case LayerKind::MaxPool2d: return pool;
        case LayerKind::Linear: return linear;
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax: return activation;
        default: break;
    }
    throw ValidationError(fmt::format("{} layers have no feature columns", to_string(kind)));
}

std::vector<double> parameter_values(const LayerConfig& config) {
    const auto field = [&](const std::optional<std::int64_t>& value, std::string_view name) {
        if (!value) throw ValidationError(fmt::format("{} config is missing {}", to_string(config.kind), name));
        return static_cast<double>(*value);
    };
    std::vector<double> out;
    for (const auto& name : parameter_names(config.kind)) {
        if (name == "batch_size") out.push_back(field(config.batch_size, name));
        else if (name == "image_size") out.push_back(field(config.image_size, name));
        else if (name == "kernel_size") out.push_back(field(config.kernel_size, name));
        else if (name == "in_channels") out.push_back(field(config.in_channels, name));
        else if (name == "out_channels") out.push_back(field(config.out_channels, name));
        else if (name == "stride") out.push_back(field(config.stride, name));
        else if (name == "padding") out.push_back(field(config.padding, name));
    }
    return out;
}

std::vector<std::string> base_feature_names(LayerKind kind, FeatureSetKind set) {
    std::vector<std::string> out;
    const auto& params = parameter_names(kind);
    if (has_params(set)) out.insert(out.end(), params.begin(), params.end());
    if (has_logs(set)) {
        for (const auto& name : params) out.push_back("log_" + name);
    }
    if (contains_macs(set)) out.emplace_back("macs");
    return out;
}

std::vector<double> base_features(const LayerConfig& config, MacCount macs, FeatureSetKind set) {
    std::vector<double> out;
    const auto params = parameter_values(config);
    if (has_params(set)) out.insert(out.end(), params.begin(), params.end());
    if (has_logs(set)) {
        for (const auto value : params) out.push_back(std::log1p(value));
    }
    if (contains_macs(set)) out.push_back(static_cast<double>(macs));
    return out;
}

std::vector<std::vector<std::size_t>> polynomial_terms(std::size_t columns, const PolynomialSpec& poly) {
    check_degree(poly);
    std::vector<std::vector<std::size_t>> terms;
    std::vector<std::size_t> current;
    // Depth-first enumeration of non-decreasing (or strictly increasing)
    // index sequences of a fixed length gives lexicographic order per degree.
    const auto emit = [&](auto&& self, std::size_t start, int remaining) -> void {
        if (remaining == 0) {
            terms.push_back(current);
            return;
        }
        for (std::size_t i = start; i < columns; ++i) {
            current.push_back(i);
            self(self, poly.interaction_only ? i + 1 : i, remaining - 1);
            current.pop_back();
        }
    };
    for (int d = 1; d <= poly.degree; ++d) emit(emit, 0, d);
    return terms;
}

std::vector<double> expand_polynomial(std::span<const double> row, const PolynomialSpec& poly) {
    const auto terms = polynomial_terms(row.size(), poly);
    std::vector<double> out;
    out.reserve(terms.size());
    for (const auto& term : terms) {
        double value = 1.0;
        for (const auto i : term) value *= row[i];
        out.push_back(value);
    }
    return out;
}

std::vector<std::string> expand_names(const std::vector<std::string>& names, const PolynomialSpec& poly) {
    std::vector<std::string> out;
    for (const auto& term : polynomial_terms(names.size(), poly)) {
        std::string name;
        for (std::size_t j = 0; j < term.size();) {
            std::size_t k = j;
            while (k < term.size() && term[k] == term[j]) ++k;
            if (!name.empty()) name += '*';
            name += names[term[j]];
            if (k - j > 1) name += fmt::format("^{}", k - j);
            j = k;
        }
        out.push_back(std::move(name));
    }
    return out;
}

ScalerParams fit_feature_scaler(const Eigen::MatrixXd& x, ScalerKind kind, const std::vector<std::string>& names,
                                Diagnostics* diag) {
    if (x.rows() == 0) throw EmptyData("cannot fit a scaler on zero rows");
    require_finite(x, "feature matrix");
    ScalerParams params;
    params.kind = kind;
    params.fitted = true;
    params.input_columns = static_cast<std::size_t>(x.cols());
    const auto n = static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto col = x.col(j);
        const auto column_name = j < static_cast<Eigen::Index>(names.size()) ? names[j] : fmt::format("#{}", j);
        switch (kind) {
            case ScalerKind::None:
                params.kept.push_back(j);
                params.center.push_back(0.0);
                params.scale.push_back(1.0);
                break;
            case ScalerKind::ZScore: {
                const double mean = col.mean();
                const double var = (col.array() - mean).square().sum() / n;
                const double sd = std::sqrt(var);
                // Relative guard: a column that is constant up to rounding.
                if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
                    warn(diag, WarningCode::ConstantColumn,
                         fmt::format("feature column '{}' is constant and was dropped", column_name));
                    break;
                }
                params.kept.push_back(j);
                params.center.push_back(mean);
                params.scale.push_back(sd);
                break;
            }
            case ScalerKind::MinMax: {
                const double lo = col.minCoeff();
                const double hi = col.maxCoeff();
                if (!(hi > lo)) {
                    warn(diag, WarningCode::ConstantColumn,
                         fmt::format("feature column '{}' is constant and was dropped", column_name));
                    break;
                }
                params.kept.push_back(j);
                params.center.push_back(lo);
                params.scale.push_back(hi - lo);
                break;
            }
        }
    }
    if (params.kept.empty()) throw EmptyData("every feature column is constant");
    return params;
}

ScalerParams fit_target_scaler(const Eigen::VectorXd& y) {
    if (y.size() == 0) throw EmptyData("cannot fit a target scaler on zero rows");
    require_finite(y, "target");
    const double lo = y.minCoeff();
    const double hi = y.maxCoeff();
    if (!(hi > lo)) throw ValidationError("target is constant; min-max scaling is undefined");
    ScalerParams params;
    params.kind = ScalerKind::MinMax;
    params.fitted = true;
    params.input_columns = 1;
    params.kept = {0};
    params.center = {lo};
    params.scale = {hi - lo};
    return params;
}

Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& x, const ScalerParams& params) {
    require_fitted(params);
    if (static_cast<std::size_t>(x.cols()) != params.input_columns) {
        throw ColumnMismatch(
            fmt::format("scaler expects {} columns, got {}", params.input_columns, x.cols()));
    }
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(params.kept.size()));
    for (std::size_t k = 0; k < params.kept.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(params.kept[k]);
        out.col(static_cast<Eigen::Index>(k)) = (x.col(j).array() - params.center[k]) / params.scale[k];
    }
    return out;
}

std::vector<double> apply_scalers(std::span<const double> row, const ScalerParams& params) {
    require_fitted(params);
    if (row.size() != params.input_columns) {
        throw ColumnMismatch(fmt::format("scaler expects {} columns, got {}", params.input_columns, row.size()));
    }
    std::vector<double> out;
    out.reserve(params.kept.size());
    for (std::size_t k = 0; k < params.kept.size(); ++k) {
        out.push_back((row[params.kept[k]] - params.center[k]) / params.scale[k]);
    }
    return out;
}

double transform_target(double joules, const ScalerParams& params) {
    require_fitted(params);
    return (joules - params.center.at(0)) / params.scale.at(0);
}

double invert_target(double normalized, const ScalerParams& params) {
    require_fitted(params);
    return normalized * params.scale.at(0) + params.center.at(0);
}

ScalerKind default_feature_scaler(FeatureSetKind set) noexcept {
    return contains_macs(set) && has_params(set) ? ScalerKind::ZScore : ScalerKind::None;
}

std::vector<std::string> FittedFeatures::column_names() const {
    std::vector<std::string> out;
    for (const auto j : feature_scaler.kept) out.push_back(expanded_names.at(j));
    return out;
}

std::vector<double> FittedFeatures::row(const LayerConfig& config, MacCount macs) const {
    if (config.kind != kind) {
        throw KindMismatch(
            fmt::format("features fitted for {} applied to {}", to_string(kind), to_string(config.kind)));
    }
    const auto base = base_features(config, macs, pipeline.set);
    const auto expanded = expand_polynomial(base, pipeline.poly);
    for (const auto v : expanded) {
        if (!std::isfinite(v)) throw NonFinite("feature row contains a non-finite value");
    }
    return apply_scalers(expanded, feature_scaler);
}

namespace {

Eigen::MatrixXd raw_design(const std::vector<MeasurementRecord>& records, const FeaturePipeline& pipeline,
                           LayerKind kind) {
    const auto width = expand_names(base_feature_names(kind, pipeline.set), pipeline.poly).size();
    const auto terms = polynomial_terms(base_feature_names(kind, pipeline.set).size(), pipeline.poly);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec.kind() != kind) {
            throw KindMismatch(fmt::format("record {} is {} but the design is for {}", i, to_string(rec.kind()),
                                           to_string(kind)));
        }
        const auto base = base_features(rec.config, rec.macs, pipeline.set);
        for (std::size_t t = 0; t < terms.size(); ++t) {
            double value = 1.0;
            for (const auto j : terms[t]) value *= base[j];
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = value;
        }
    }
    require_finite(x, "feature matrix");
    return x;
}

Eigen::VectorXd raw_target(const std::vector<MeasurementRecord>& records) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) y(static_cast<Eigen::Index>(i)) = records[i].cpu_energy_j;
    require_finite(y, "target");
    return y;
}

}  // namespace

BuiltDesign build_design(const std::vector<MeasurementRecord>& records, const FeaturePipeline& pipeline,
                         Diagnostics* diag) {
    if (records.empty()) throw EmptyRecords("no records to build a design from");
    check_degree(pipeline.poly);
    const auto kind = records.front().kind();

    BuiltDesign out;
    auto& f = out.features;
    f.kind = kind;
    f.pipeline = pipeline;
    f.expanded_names = expand_names(base_feature_names(kind, pipeline.set), pipeline.poly);

    const auto x = raw_design(records, pipeline, kind);
    const auto y = raw_target(records);
    f.feature_scaler = fit_feature_scaler(x, pipeline.feature_scaler, f.expanded_names, diag);
    f.target_scaler = fit_target_scaler(y);

    out.design.column_names = f.column_names();
    out.design.x = apply_scaler(x, f.feature_scaler);
    out.design.y = (y.array() - f.target_scaler.center[0]) / f.target_scaler.scale[0];
    return out;
}

DesignMatrix transform_records(const std::vector<MeasurementRecord>& records, const FittedFeatures& features) {
    require_fitted(features.feature_scaler);
    require_fitted(features.target_scaler);
    DesignMatrix out;
    out.column_names = features.column_names();
    if (records.empty()) {
        out.x.resize(0, static_cast<Eigen::Index>(out.column_names.size()));
        out.y.resize(0);
        return out;
    }
    out.x = apply_scaler(raw_design(records, features.pipeline, features.kind), features.feature_scaler);
    const auto y = raw_target(records);
    out.y = (y.array() - features.target_scaler.center[0]) / features.target_scaler.scale[0];
    return out;
}

}  // namespace dlenergy
