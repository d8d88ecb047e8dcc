#include "dlenergy/experiments.hpp"

#include <fmt/format.h>

#include "dlenergy/csv.hpp"
#include "dlenergy/parallel.hpp"

namespace dlenergy {

namespace {

ExperimentConfig config(FeatureSetKind set, PolynomialSpec poly, bool scaled, ModelKind model,
                        bool selected = false) {
    ExperimentConfig c;
    c.spec.features = {set, poly, scaled ? ScalerKind::ZScore : ScalerKind::None};
    c.spec.model = model;
    c.selected = selected;
    return c;
}

std::string poly_label(const PolynomialSpec& poly) {
    if (poly.degree <= 1) return "";
    return fmt::format("d={}{}", poly.degree, poly.interaction_only ? " ito" : "");
}

std::string fmt_opt(const std::optional<CvReport>& cv, double CvReport::*field) {
    return cv ? csv::format_double((*cv).*field) : std::string();
}

}  // namespace

std::vector<ExperimentConfig> feature_set_configurations(LayerKind kind) {
    using F = FeatureSetKind;
    using M = ModelKind;
    switch (kind) {
        case LayerKind::Conv2d:
            return {config(F::ParameterSet, {4, true}, false, M::Lasso),
                    config(F::LogParameterSet, {3, true}, false, M::Lasso),
                    config(F::MacOnly, {1, false}, false, M::Ols, true),
                    config(F::ParameterMacSet, {1, false}, true, M::Ols),
                    config(F::LogParameterMacSet, {1, false}, true, M::Ols)};
        case LayerKind::MaxPool2d:
            return {config(F::ParameterSet, {4, true}, false, M::Lasso),
                    config(F::LogParameterSet, {3, true}, false, M::Lasso),
                    config(F::MacOnly, {1, false}, false, M::Ols),
                    config(F::ParameterMacSet, {2, true}, true, M::Ols),
                    config(F::LogParameterMacSet, {2, true}, true, M::Ols, true)};
        case LayerKind::Linear:
            return {config(F::ParameterSet, {3, true}, false, M::Ols),
                    config(F::LogParameterSet, {3, true}, false, M::Ols),
                    config(F::MacOnly, {1, false}, false, M::Ols, true),
                    config(F::ParameterMacSet, {1, false}, true, M::Ols),
                    config(F::LogParameterMacSet, {1, false}, true, M::Ols)};
        default: break;
    }
    throw MissingKind(fmt::format("the feature-set experiment covers conv2d, maxpool2d and linear, not {}",
                                  to_string(kind)));
}

std::vector<FeatureExperimentRow> run_feature_set_experiment(const std::vector<MeasurementRecord>& records,
                                                             LayerKind kind, const ExperimentOptions& options,
                                                             Diagnostics* diag) {
    const auto configs = feature_set_configurations(kind);
    const auto subset = filter_kind(records, kind);
    if (subset.empty()) throw MissingKind(fmt::format("no {} records for the experiment", to_string(kind)));
    const auto parts = split(subset, options.split);

    std::vector<FeatureExperimentRow> rows(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        auto& row = rows[i];
        row.kind = kind;
        row.config = configs[i];
        auto spec = configs[i].spec;
        if (spec.model == ModelKind::Lasso) {
            spec.lambda = grid_search_lambda(parts.train, parts.val, spec, options.lambda_grid, diag).best_lambda;
        }
        row.config.spec = spec;
        row.lambda = spec.lambda;
        const auto fitted = fit_pipeline(parts.train, spec, diag);
        row.test = evaluate_pipeline(fitted, parts.test);
        if (options.cv_folds >= 2 &&
            group_by_config(parts.train).size() >= static_cast<std::size_t>(options.cv_folds)) {
            row.cv = cross_validate(parts.train, spec, options.cv_folds, options.split.seed, diag);
        }
    }
    return rows;
}

void write_feature_experiment_csv(std::ostream& out, const std::vector<FeatureExperimentRow>& rows) {
    out << kFeatureExperimentHeader << '\n';
    for (const auto& r : rows) {
        const auto& f = r.config.spec.features;
        csv::write_row(out, {std::string(to_string(r.kind)), std::string(to_string(f.set)), poly_label(f.poly),
                             f.feature_scaler == ScalerKind::ZScore ? "y" : "n",
                             std::string(to_string(r.config.spec.model)), csv::format_double(r.lambda),
                             fmt_opt(r.cv, &CvReport::mean_r2), fmt_opt(r.cv, &CvReport::std_r2),
                             fmt_opt(r.cv, &CvReport::mean_mse), fmt_opt(r.cv, &CvReport::std_mse),
                             csv::format_double(r.test.r2), csv::format_double(r.test.mse),
                             csv::format_double(r.test.max_error), r.config.selected ? "*" : ""});
    }
}

std::string AblationResult::subset_name(std::uint32_t mask) const {
    std::string out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (!(mask >> j & 1u)) continue;
        if (!out.empty()) out += '+';
        out += columns[j];
    }
    return out;
}

AblationResult run_ablation(const std::vector<MeasurementRecord>& records, LayerKind kind, const SplitSpec& split_spec,
                            unsigned threads) {
    const auto subset = filter_kind(records, kind);
    if (subset.empty()) throw MissingKind(fmt::format("no {} records for the ablation", to_string(kind)));
    const auto parts = split(subset, split_spec);

    // Standardizing the full design once is the same as standardizing each
    // subset: z-scoring is column-wise.
    const FeaturePipeline universe{FeatureSetKind::LogParameterMacSet, {1, false}, ScalerKind::ZScore};
    const auto built = build_design(parts.train, universe);
    const auto test = transform_records(parts.test, built.features);

    AblationResult result;
    result.kind = kind;
    result.columns = built.features.expanded_names;
    const auto p = result.columns.size();
    if (p > 31) throw ValidationError("too many ablation columns");
    if (built.design.column_names.size() != p) {
        throw ValidationError("a feature column is constant on the training part; ablation needs every column");
    }
    std::size_t mac_column = p;
    for (std::size_t j = 0; j < p; ++j) {
        if (result.columns[j] == "macs") mac_column = j;
    }

    const std::uint32_t count = (1u << p) - 1;
    result.rows.resize(count);
    parallel_for(
        count,
        [&](std::size_t i) {
            const auto mask = static_cast<std::uint32_t>(i + 1);
            std::vector<Eigen::Index> cols;
            for (std::size_t j = 0; j < p; ++j) {
                if (mask >> j & 1u) cols.push_back(static_cast<Eigen::Index>(j));
            }
            const Eigen::MatrixXd x_train = built.design.x(Eigen::all, cols);
            const Eigen::MatrixXd x_test = test.x(Eigen::all, cols);
            const auto model = fit_ols(x_train, built.design.y);
            const auto m = compute_metrics(test.y, model.predict(x_test));
            auto& row = result.rows[i];
            row.mask = mask;
            row.size = static_cast<int>(cols.size());
            row.has_macs = mac_column < p && (mask >> mac_column & 1u);
            row.r2 = m.r2;
            row.mse = m.mse;
        },
        threads);
    return result;
}

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
    out << kAblationHeader << '\n';
    for (const auto& r : result.rows) {
        csv::write_row(out, {std::to_string(r.mask), std::to_string(r.size), result.subset_name(r.mask),
                             r.has_macs ? "1" : "0", csv::format_double(r.r2), csv::format_double(r.mse)});
    }
}

}  // namespace dlenergy
