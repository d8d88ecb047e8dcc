#include "dlenergy/predict.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dlenergy/csv.hpp"
#include "dlenergy/macs.hpp"

namespace dlenergy {

using json = nlohmann::json;

PipelineSpec default_pipeline(LayerKind kind) {
    const auto make = [](FeatureSetKind set, PolynomialSpec poly) {
        PipelineSpec spec;
        spec.features = {set, poly, default_feature_scaler(set)};
        return spec;
    };
    switch (kind) {
        case LayerKind::Conv2d: return make(FeatureSetKind::MacOnly, {1, false});
        case LayerKind::MaxPool2d: return make(FeatureSetKind::LogParameterMacSet, {2, true});
        case LayerKind::Linear: return make(FeatureSetKind::MacOnly, {1, false});
        case LayerKind::ReLU: return make(FeatureSetKind::MacOnly, {1, false});
        case LayerKind::Sigmoid: return make(FeatureSetKind::ParameterSet, {2, true});
        case LayerKind::Tanh: return make(FeatureSetKind::ParameterSet, {2, false});
        case LayerKind::Softmax: return make(FeatureSetKind::ParameterSet, {2, true});
        default: break;
    }
    throw MissingKind(fmt::format("no predictor is defined for {} layers", to_string(kind)));
}

const PredictorModel& PredictorBundle::at(LayerKind kind) const {
    const auto it = models.find(kind);
    if (it == models.end()) throw MissingKind(fmt::format("bundle has no predictor for {} layers", to_string(kind)));
    return it->second;
}

PredictorModel train_model(const std::vector<MeasurementRecord>& records, const PipelineSpec& spec,
                           const TrainOptions& options, Diagnostics* diag) {
    if (records.empty()) throw EmptyRecords("no records to train on");
    const auto parts = split(records, options.split);
    PredictorModel out;
    out.kind = records.front().kind();
    out.pipeline = fit_pipeline(parts.train, spec, diag);
    out.train_records = parts.train.size();
    out.val_records = parts.val.size();
    out.test_records = parts.test.size();
    out.train_metrics = evaluate_pipeline(out.pipeline, parts.train);
    if (!parts.val.empty()) out.val_metrics = evaluate_pipeline(out.pipeline, parts.val);
    if (!parts.test.empty()) out.test_metrics = evaluate_pipeline(out.pipeline, parts.test);
    if (options.cv_folds >= 2 && group_by_config(parts.train).size() >= static_cast<std::size_t>(options.cv_folds)) {
        out.cv = cross_validate(parts.train, spec, options.cv_folds, options.split.seed, diag);
    }
    return out;
}

PredictorBundle train_default_bundle(const std::vector<MeasurementRecord>& records, const TrainOptions& options,
                                     Diagnostics* diag) {
    PredictorBundle bundle;
    bundle.metadata = options.metadata;
    bundle.metadata.seed = options.split.seed;
    bundle.metadata.dataset_fingerprint = dataset_fingerprint(records);
    for (const auto kind : options.kinds) {
        const auto subset = filter_kind(records, kind);
        if (subset.empty()) {
            throw MissingKind(fmt::format("no {} records to train a predictor on", to_string(kind)));
        }
        const auto it = options.pipelines.find(kind);
        const auto spec = it != options.pipelines.end() ? it->second : default_pipeline(kind);
        bundle.models.emplace(kind, train_model(subset, spec, options, diag));
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json metrics_json(const EvalMetrics& m) { return {{"r2", m.r2}, {"mse", m.mse}, {"max_error", m.max_error}}; }

EvalMetrics metrics_from(const json& j) {
    return {j.at("r2").get<double>(), j.at("mse").get<double>(), j.at("max_error").get<double>()};
}

json scaler_json(const ScalerParams& s) {
    return {{"kind", to_string(s.kind)},
            {"input_columns", s.input_columns},
            {"kept", s.kept},
            {"center", s.center},
            {"scale", s.scale}};
}

ScalerParams scaler_from(const json& j) {
    ScalerParams s;
    s.kind = parse_scaler_kind(j.at("kind").get<std::string>());
    s.fitted = true;
    s.input_columns = j.at("input_columns").get<std::size_t>();
    s.kept = j.at("kept").get<std::vector<std::size_t>>();
    s.center = j.at("center").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    if (s.center.size() != s.kept.size() || s.scale.size() != s.kept.size()) {
        throw SchemaError("scaler arrays have inconsistent lengths");
    }
    for (const auto k : s.kept) {
        if (k >= s.input_columns) throw SchemaError("scaler keeps a column outside its input");
    }
    return s;
}

json model_json(const PredictorModel& m) {
    const auto& p = m.pipeline;
    const auto& lm = p.model;
    json out{
        {"feature_set", to_string(p.spec.features.set)},
        {"polynomial", {{"degree", p.spec.features.poly.degree},
                        {"interaction_only", p.spec.features.poly.interaction_only}}},
        {"feature_scaler", scaler_json(p.features.feature_scaler)},
        {"target_scaler", scaler_json(p.features.target_scaler)},
        {"columns", p.features.column_names()},
        {"regressor",
         {{"kind", to_string(lm.kind)},
          {"lambda", lm.lambda},
          {"tol", p.spec.lasso.tol},
          {"max_iter", p.spec.lasso.max_iter},
          {"standardize", p.spec.lasso.standardize},
          {"coefficients", std::vector<double>(lm.coefficients.data(), lm.coefficients.data() + lm.coefficients.size())},
          {"intercept", lm.intercept},
          {"rank", lm.rank},
          {"iterations", lm.iterations},
          {"converged", lm.converged}}},
        {"records", {{"train", m.train_records}, {"val", m.val_records}, {"test", m.test_records}}},
        {"metrics",
         {{"train", metrics_json(m.train_metrics)},
          {"val", metrics_json(m.val_metrics)},
          {"test", metrics_json(m.test_metrics)}}},
    };
    if (m.cv) {
        out["metrics"]["cv"] = {{"k", m.cv->k},
                                {"fold_r2", m.cv->fold_r2},
                                {"fold_mse", m.cv->fold_mse},
                                {"mean_r2", m.cv->mean_r2},
                                {"std_r2", m.cv->std_r2},
                                {"mean_mse", m.cv->mean_mse},
                                {"std_mse", m.cv->std_mse}};
    }
    return out;
}

PredictorModel model_from(LayerKind kind, const json& j) {
    PredictorModel m;
    m.kind = kind;
    auto& p = m.pipeline;
    p.spec.features.set = parse_feature_set(j.at("feature_set").get<std::string>());
    p.spec.features.poly.degree = j.at("polynomial").at("degree").get<int>();
    p.spec.features.poly.interaction_only = j.at("polynomial").at("interaction_only").get<bool>();
    p.features.kind = kind;
    p.features.feature_scaler = scaler_from(j.at("feature_scaler"));
    p.features.target_scaler = scaler_from(j.at("target_scaler"));
    p.spec.features.feature_scaler = p.features.feature_scaler.kind;
    p.features.pipeline = p.spec.features;
    p.features.expanded_names = expand_names(base_feature_names(kind, p.spec.features.set), p.spec.features.poly);
    if (p.features.expanded_names.size() != p.features.feature_scaler.input_columns) {
        throw SchemaError(fmt::format("{} model: scaler expects {} columns but the feature set yields {}",
                                      to_string(kind), p.features.feature_scaler.input_columns,
                                      p.features.expanded_names.size()));
    }
    if (p.features.target_scaler.kept.size() != 1) throw SchemaError("target scaler must have one column");

    const auto& r = j.at("regressor");
    auto& lm = p.model;
    lm.kind = parse_model_kind(r.at("kind").get<std::string>());
    lm.lambda = r.at("lambda").get<double>();
    p.spec.model = lm.kind;
    p.spec.lambda = lm.lambda;
    p.spec.lasso.tol = r.at("tol").get<double>();
    p.spec.lasso.max_iter = r.at("max_iter").get<int>();
    p.spec.lasso.standardize = r.at("standardize").get<bool>();
    const auto coefs = r.at("coefficients").get<std::vector<double>>();
    if (coefs.size() != p.features.feature_scaler.kept.size()) {
        throw SchemaError(fmt::format("{} model: {} coefficients for {} feature columns", to_string(kind),
                                      coefs.size(), p.features.feature_scaler.kept.size()));
    }
    lm.coefficients = Eigen::Map<const Eigen::VectorXd>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    lm.intercept = r.at("intercept").get<double>();
    lm.rank = r.at("rank").get<int>();
    lm.iterations = r.at("iterations").get<int>();
    lm.converged = r.at("converged").get<bool>();

    const auto& rec = j.at("records");
    m.train_records = rec.at("train").get<std::size_t>();
    m.val_records = rec.at("val").get<std::size_t>();
    m.test_records = rec.at("test").get<std::size_t>();
    const auto& met = j.at("metrics");
    m.train_metrics = metrics_from(met.at("train"));
    m.val_metrics = metrics_from(met.at("val"));
    m.test_metrics = metrics_from(met.at("test"));
    if (met.contains("cv")) {
        const auto& c = met.at("cv");
        CvReport cv;
        cv.k = c.at("k").get<int>();
        cv.fold_r2 = c.at("fold_r2").get<std::vector<double>>();
        cv.fold_mse = c.at("fold_mse").get<std::vector<double>>();
        cv.mean_r2 = c.at("mean_r2").get<double>();
        cv.std_r2 = c.at("std_r2").get<double>();
        cv.mean_mse = c.at("mean_mse").get<double>();
        cv.std_mse = c.at("std_mse").get<double>();
        m.cv = std::move(cv);
    }
    return m;
}

}  // namespace

json to_json(const PredictorBundle& bundle) {
    const auto& md = bundle.metadata;
    json models = json::object();
    for (const auto& [kind, model] : bundle.models) models[std::string(to_string(kind))] = model_json(model);
    return {
        {"format_version", kBundleFormatVersion},
        {"metadata",
         {{"hardware", md.hardware},
          {"dataset_fingerprint", md.dataset_fingerprint},
          {"created_at", md.created_at ? json(*md.created_at) : json(nullptr)},
          {"seed", md.seed},
          {"energy_domains", md.energy_domains}}},
        {"models", std::move(models)},
    };
}

PredictorBundle bundle_from_json(const json& doc) {
    try {
        const auto version = doc.at("format_version").get<int>();
        if (version != kBundleFormatVersion) {
            throw SchemaError(fmt::format("unsupported bundle format_version {}", version));
        }
        PredictorBundle bundle;
        const auto& md = doc.at("metadata");
        bundle.metadata.hardware = md.at("hardware").get<std::string>();
        bundle.metadata.dataset_fingerprint = md.at("dataset_fingerprint").get<std::string>();
        if (!md.at("created_at").is_null()) bundle.metadata.created_at = md.at("created_at").get<std::string>();
        bundle.metadata.seed = md.at("seed").get<std::uint64_t>();
        bundle.metadata.energy_domains = md.value("energy_domains", std::vector<std::string>{});
        for (const auto& [name, model] : doc.at("models").items()) {
            const auto kind = parse_layer_kind(name);
            if (!is_predictable(kind)) throw SchemaError(fmt::format("bundle contains a model for {}", name));
            bundle.models.emplace(kind, model_from(kind, model));
        }
        return bundle;
    } catch (const json::exception& e) {
        throw SchemaError(fmt::format("malformed bundle: {}", e.what()));
    }
}

std::string dump_bundle(const PredictorBundle& bundle) { return to_json(bundle).dump(2) + "\n"; }

void save_bundle(const std::string& path, const PredictorBundle& bundle) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path));
    out << dump_bundle(bundle);
    if (!out) throw IoError(fmt::format("failed writing {}", path));
}

PredictorBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()));
    }
    return bundle_from_json(doc);
}

// ---------------------------------------------------------------------------
// Estimation

EnergyEstimate estimate(const PredictorBundle& bundle, const ArchitectureSpec& arch,
                        std::optional<std::int64_t> batch_size, Diagnostics* diag) {
    const auto resolved_arch = batch_size ? with_batch(arch, *batch_size) : arch;
    EnergyEstimate out;
    out.architecture = arch.name;
    out.batch_size = resolved_arch.input.batch;
    for (const auto& layer : extract_predictable_layers(resolved_arch)) {
        LayerEstimate le;
        le.layer_index = layer.index;
        le.kind = layer.config.kind;
        le.config = layer.config;
        le.macs = layer_macs(layer);
        le.predicted_joules = bundle.at(le.kind).predict_joules(le.config, le.macs);
        if (!std::isfinite(le.predicted_joules)) {
            throw NonFinite(fmt::format("layer {} prediction is not finite", layer.index));
        }
        if (le.predicted_joules < 0.0) {
            warn(diag, WarningCode::NegativeClamped,
                 fmt::format("layer {} ({}) predicted {} J; clamped to 0", layer.index, to_string(le.kind),
                             le.predicted_joules));
            le.predicted_joules = 0.0;
            le.clamped = true;
            out.any_clamped = true;
        }
        out.total_joules += le.predicted_joules;
        if (__builtin_add_overflow(out.total_macs, le.macs, &out.total_macs)) {
            throw OverflowError("total MAC count exceeds 64 bits");
        }
        out.layers.push_back(std::move(le));
    }
    return out;
}

json to_json(const EnergyEstimate& est) {
    json layers = json::array();
    for (const auto& l : est.layers) {
        layers.push_back({{"layer_index", l.layer_index},
                          {"kind", to_string(l.kind)},
                          {"config", to_json(l.config)},
                          {"macs", l.macs},
                          {"predicted_joules", l.predicted_joules},
                          {"clamped", l.clamped}});
    }
    json flags = json::array();
    if (est.any_clamped) flags.push_back("negative_clamped");
    return {{"format_version", kEstimateFormatVersion},
            {"architecture", est.architecture},
            {"batch", est.batch_size},
            {"per_layer", std::move(layers)},
            {"total_joules", est.total_joules},
            {"total_macs", est.total_macs},
            {"flags", std::move(flags)}};
}

// ---------------------------------------------------------------------------
// Real-architecture evaluation

namespace {

double clamped_prediction(const PredictorBundle& bundle, const LayerConfig& cfg, MacCount macs) {
    return std::max(0.0, bundle.at(cfg.kind).predict_joules(cfg, macs));
}

}  // namespace

RealEvaluation evaluate_on_real(const PredictorBundle& bundle, const std::vector<ModelWiseRecord>& records,
                                Diagnostics* diag) {
    if (records.empty()) throw EmptyData("no model-wise records to evaluate");
    RealEvaluation out;
    std::map<LayerKind, std::pair<std::vector<double>, std::vector<double>>> per_kind;

    for (const auto& rec : records) {
        ModelScatterPoint mp;
        mp.architecture = rec.architecture;
        mp.batch_size = rec.batch_size;
        mp.total_macs = rec.total_macs;
        mp.measured_j = rec.total_energy_j;

        if (rec.layers.empty()) {
            mp.predicted_j = estimate(bundle, load_architecture(rec.architecture), rec.batch_size).total_joules;
        } else {
            for (const auto& layer : rec.layers) {
                mp.layer_sum_j += layer.energy_j;
                if (!is_predictable(layer.config.kind)) continue;
                const double predicted = clamped_prediction(bundle, layer.config, layer.macs);
                mp.predicted_j += predicted;
                out.layers.push_back({rec.architecture, rec.batch_size, layer.layer_index, layer.config.kind,
                                      layer.macs, layer.energy_j, predicted});
                auto& [measured, preds] = per_kind[layer.config.kind];
                measured.push_back(layer.energy_j);
                preds.push_back(predicted);
            }
            const double gap = std::abs(mp.layer_sum_j - mp.measured_j);
            if (gap > 0.05 * std::abs(mp.measured_j)) {
                warn(diag, WarningCode::Aggregation,
                     fmt::format("{} batch {}: per-layer energies sum to {} J but the total is {} J", rec.architecture,
                                 rec.batch_size, mp.layer_sum_j, mp.measured_j));
            }
        }
        out.models.push_back(std::move(mp));
    }

    for (const auto& [kind, pair] : per_kind) {
        const auto& [measured, preds] = pair;
        out.per_kind[kind] = compute_metrics(
            Eigen::Map<const Eigen::VectorXd>(measured.data(), static_cast<Eigen::Index>(measured.size())),
            Eigen::Map<const Eigen::VectorXd>(preds.data(), static_cast<Eigen::Index>(preds.size())));
    }
    Eigen::VectorXd measured(static_cast<Eigen::Index>(out.models.size()));
    Eigen::VectorXd predicted(measured.size());
    for (std::size_t i = 0; i < out.models.size(); ++i) {
        measured(static_cast<Eigen::Index>(i)) = out.models[i].measured_j;
        predicted(static_cast<Eigen::Index>(i)) = out.models[i].predicted_j;
    }
    out.overall = compute_metrics(measured, predicted);
    return out;
}

void write_layer_scatter_csv(std::ostream& out, const std::vector<LayerScatterPoint>& points) {
    out << kLayerScatterHeader << '\n';
    for (const auto& p : points) {
        csv::write_row(out, {p.architecture, std::to_string(p.batch_size), std::to_string(p.layer_index),
                             std::string(to_string(p.kind)), std::to_string(p.macs), csv::format_double(p.measured_j),
                             csv::format_double(p.predicted_j)});
    }
}

void write_model_scatter_csv(std::ostream& out, const std::vector<ModelScatterPoint>& points) {
    out << kModelScatterHeader << '\n';
    for (const auto& p : points) {
        csv::write_row(out, {p.architecture, std::to_string(p.batch_size), std::to_string(p.total_macs),
                             csv::format_double(p.measured_j), csv::format_double(p.layer_sum_j),
                             csv::format_double(p.predicted_j)});
    }
}

}  // namespace dlenergy
