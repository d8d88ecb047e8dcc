#include "doctest.h"

#include <cmath>

#include "dlenergy/features.hpp"
#include "dlenergy/rng.hpp"

using namespace dlenergy;

namespace {

MeasurementRecord record(const LayerConfig& cfg, double energy) {
    MeasurementRecord rec;
    rec.config = cfg;
    rec.macs = config_macs(cfg);
    rec.cpu_energy_j = energy;
    return rec;
}

std::vector<MeasurementRecord> linear_records(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<MeasurementRecord> out;
    for (int i = 0; i < n; ++i) {
        const auto cfg = sample_config(LayerKind::Linear, rng);
        out.push_back(record(cfg, 1e-9 * static_cast<double>(config_macs(cfg)) + 1e-3));
    }
    return out;
}

}  // namespace

TEST_CASE("interaction-only degree 2 over two columns") {
    const std::vector<double> row{2.0, 3.0};
    const auto out = expand_polynomial(row, {2, true});
    CHECK(out == std::vector<double>{2.0, 3.0, 6.0});
    CHECK(expand_names({"a", "b"}, {2, true}) == std::vector<std::string>{"a", "b", "a*b"});
}

TEST_CASE("full degree 2 over two columns in graded-lex order") {
    const std::vector<double> row{2.0, 3.0};
    CHECK(expand_polynomial(row, {2, false}) == std::vector<double>{2.0, 3.0, 4.0, 6.0, 9.0});
    CHECK(expand_names({"a", "b"}, {2, false}) ==
          std::vector<std::string>{"a", "b", "a^2", "a*b", "b^2"});
}

TEST_CASE("interaction-only degree 3 over three columns") {
    const auto names = expand_names({"a", "b", "c"}, {3, true});
    CHECK(names == std::vector<std::string>{"a", "b", "c", "a*b", "a*c", "b*c", "a*b*c"});
}

TEST_CASE("polynomial term counts match the binomial formulas") {
    // full: C(p+d, d) - 1, interaction-only: sum_{k=1..d} C(p, k)
    CHECK(polynomial_terms(7, {2, false}).size() == 35);
    CHECK(polynomial_terms(7, {3, false}).size() == 119);
    CHECK(polynomial_terms(7, {2, true}).size() == 28);
    CHECK(polynomial_terms(7, {4, true}).size() == 98);
    CHECK(polynomial_terms(2, {4, true}).size() == 3);
    CHECK(polynomial_terms(5, {1, false}).size() == 5);
}

TEST_CASE("degree outside 1..4 is rejected") {
    CHECK_THROWS_AS(polynomial_terms(3, {0, false}), DegreeOutOfRange);
    CHECK_THROWS_AS(polynomial_terms(3, {5, false}), DegreeOutOfRange);
}

TEST_CASE("min-max target scaling and its inverse") {
    Eigen::VectorXd y(3);
    y << 2e-3, 4e-3, 6e-3;
    const auto p = fit_target_scaler(y);
    CHECK(transform_target(2e-3, p) == doctest::Approx(0.0));
    CHECK(transform_target(4e-3, p) == doctest::Approx(0.5));
    CHECK(transform_target(6e-3, p) == doctest::Approx(1.0));
    for (const double v : {2e-3, 3.3e-3, 6e-3, 1.0}) {
        CHECK(std::abs(invert_target(transform_target(v, p), p) - v) < 1e-12);
    }
    // Out-of-range predictions extrapolate linearly.
    CHECK(invert_target(1.5, p) == doctest::Approx(8e-3));
    CHECK(invert_target(-0.25, p) == doctest::Approx(1e-3));
}

TEST_CASE("constant target cannot be min-max scaled") {
    Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 0.5);
    CHECK_THROWS_AS(fit_target_scaler(y), ValidationError);
}

TEST_CASE("z-score uses the population standard deviation") {
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    const auto p = fit_feature_scaler(x, ScalerKind::ZScore, {"a"});
    const auto z = apply_scaler(x, p);
    CHECK(z(0, 0) == doctest::Approx(-1.224744871391589));
    CHECK(z(1, 0) == doctest::Approx(0.0));
    CHECK(z(2, 0) == doctest::Approx(1.224744871391589));
}

TEST_CASE("z-score drops constant columns with a warning") {
    Eigen::MatrixXd x(4, 3);
    x << 1, 5, 10, 2, 5, 20, 3, 5, 30, 4, 5, 40;
    Diagnostics diag;
    const auto p = fit_feature_scaler(x, ScalerKind::ZScore, {"a", "b", "c"}, &diag);
    CHECK(p.kept == std::vector<std::size_t>{0, 2});
    CHECK(diag.count(WarningCode::ConstantColumn) == 1);
    CHECK(apply_scaler(x, p).cols() == 2);
    const std::vector<double> row{1.0, 5.0, 10.0};
    CHECK(apply_scalers(row, p).size() == 2);
}

TEST_CASE("scalers refuse mismatched or unfitted input") {
    ScalerParams unfitted;
    CHECK_THROWS_AS(transform_target(1.0, unfitted), UnfittedScaler);
    Eigen::MatrixXd x(3, 2);
    x << 1, 2, 3, 4, 5, 7;
    const auto p = fit_feature_scaler(x, ScalerKind::ZScore, {"a", "b"});
    CHECK_THROWS_AS(apply_scaler(Eigen::MatrixXd::Zero(3, 3), p), ColumnMismatch);
}

TEST_CASE("feature set columns") {
    CHECK(base_feature_names(LayerKind::Conv2d, FeatureSetKind::ParameterSet).size() == 7);
    CHECK(base_feature_names(LayerKind::Conv2d, FeatureSetKind::LogParameterMacSet).size() == 15);
    CHECK(base_feature_names(LayerKind::MaxPool2d, FeatureSetKind::LogParameterSet).size() == 12);
    CHECK(base_feature_names(LayerKind::Linear, FeatureSetKind::ParameterMacSet) ==
          std::vector<std::string>{"batch_size", "in_channels", "out_channels", "macs"});
    CHECK(base_feature_names(LayerKind::ReLU, FeatureSetKind::MacOnly) == std::vector<std::string>{"macs"});
    CHECK(base_feature_names(LayerKind::Tanh, FeatureSetKind::ParameterSet) ==
          std::vector<std::string>{"batch_size", "in_channels"});

    const LayerConfig lin{.kind = LayerKind::Linear, .batch_size = 3, .in_channels = 9, .out_channels = 4};
    const auto v = base_features(lin, 120, FeatureSetKind::LogParameterMacSet);
    REQUIRE(v.size() == 7);
    CHECK(v[0] == 3.0);
    CHECK(v[3] == doctest::Approx(std::log(4.0)));
    CHECK(v[4] == doctest::Approx(std::log(10.0)));
    CHECK(v[6] == 120.0);
}

TEST_CASE("feature set names round-trip") {
    for (const auto set : {FeatureSetKind::ParameterSet, FeatureSetKind::LogParameterSet, FeatureSetKind::MacOnly,
                           FeatureSetKind::ParameterMacSet, FeatureSetKind::LogParameterMacSet}) {
        CHECK(parse_feature_set(to_string(set)) == set);
    }
    CHECK_THROWS_AS(parse_feature_set("bogus"), ParseError);
    CHECK(default_feature_scaler(FeatureSetKind::MacOnly) == ScalerKind::None);
    CHECK(default_feature_scaler(FeatureSetKind::LogParameterMacSet) == ScalerKind::ZScore);
    CHECK(default_feature_scaler(FeatureSetKind::ParameterSet) == ScalerKind::None);
}

TEST_CASE("design matrix is built from training records only") {
    const auto train = linear_records(50, 3);
    const auto other = linear_records(20, 4);
    const FeaturePipeline pipe{FeatureSetKind::ParameterMacSet, {2, true}, ScalerKind::ZScore};
    const auto built = build_design(train, pipe);
    CHECK(built.design.x.rows() == 50);
    CHECK(built.design.x.cols() == 10);
    CHECK(built.design.y.minCoeff() == doctest::Approx(0.0));
    CHECK(built.design.y.maxCoeff() == doctest::Approx(1.0));
    for (Eigen::Index j = 0; j < built.design.x.cols(); ++j) {
        CHECK(std::abs(built.design.x.col(j).mean()) < 1e-9);
    }

    const auto test = transform_records(other, built.features);
    CHECK(test.x.cols() == built.design.x.cols());
    // Rows computed one at a time agree with the batch transform.
    for (std::size_t i = 0; i < other.size(); ++i) {
        const auto row = built.features.row(other[i].config, other[i].macs);
        for (std::size_t j = 0; j < row.size(); ++j) {
            CHECK(row[j] == doctest::Approx(test.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
    }
}

TEST_CASE("design rejects empty and mixed inputs") {
    CHECK_THROWS_AS(build_design({}, {}), EmptyRecords);
    auto recs = linear_records(5, 1);
    recs.push_back(record({.kind = LayerKind::ReLU, .batch_size = 1, .in_channels = 10}, 1.0));
    CHECK_THROWS_AS(build_design(recs, {}), KindMismatch);
}

TEST_CASE("fixed batch size is dropped as a constant column") {
    std::vector<MeasurementRecord> recs;
    for (int i = 1; i <= 10; ++i) {
        recs.push_back(record({.kind = LayerKind::ReLU, .batch_size = 4, .in_channels = 100 * i}, 0.01 * i));
    }
    Diagnostics diag;
    const auto built = build_design(recs, {FeatureSetKind::ParameterSet, {1, false}, ScalerKind::ZScore}, &diag);
    CHECK(built.design.column_names == std::vector<std::string>{"in_channels"});
    CHECK(diag.count(WarningCode::ConstantColumn) == 1);
}
