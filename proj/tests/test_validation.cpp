#include "doctest.h"

#include <algorithm>
#include <set>

#include "dlenergy/validation.hpp"

using namespace dlenergy;

namespace {

MeasurementRecord linear(std::int64_t batch, std::int64_t in, std::int64_t out, double energy) {
    MeasurementRecord rec;
    rec.config = {.kind = LayerKind::Linear, .batch_size = batch, .in_channels = in, .out_channels = out};
    rec.macs = config_macs(rec.config);
    rec.cpu_energy_j = energy;
    return rec;
}

// Energy proportional to MACs, optionally with relative Gaussian noise.
std::vector<MeasurementRecord> mac_world(LayerKind kind, int n, std::uint64_t seed, double noise = 0.0) {
    Rng rng(seed);
    std::vector<MeasurementRecord> out;
    for (int i = 0; i < n; ++i) {
        MeasurementRecord rec;
        rec.config = sample_config(kind, rng);
        rec.macs = config_macs(rec.config);
        const double e = 2e-10 * static_cast<double>(rec.macs) + 1e-4;
        rec.cpu_energy_j = e * (1.0 + noise * rng.normal());
        out.push_back(rec);
    }
    return out;
}

const PipelineSpec mac_ols{{FeatureSetKind::MacOnly, {1, false}, ScalerKind::ZScore}, ModelKind::Ols};

}  // namespace

TEST_CASE("ten configs and ten folds hold out one config each") {
    std::vector<MeasurementRecord> recs;
    for (int c = 1; c <= 10; ++c) {
        for (int r = 0; r < 3; ++r) recs.push_back(linear(1, c, 2, 0.1 * c));
    }
    const auto folds = cv_folds(recs, 10, 4);
    REQUIRE(folds.size() == 10);
    for (const auto& fold : folds) {
        REQUIRE(fold.size() == 3);
        CHECK(config_key(recs[fold[0]].config) == config_key(recs[fold[2]].config));
    }
}

TEST_CASE("folds are disjoint and exhaustive") {
    const auto recs = mac_world(LayerKind::Linear, 137, 2);
    for (const int k : {2, 3, 5, 10}) {
        const auto folds = cv_folds(recs, k, 99);
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (const auto& fold : folds) {
            total += fold.size();
            seen.insert(fold.begin(), fold.end());
        }
        CHECK(total == recs.size());
        CHECK(seen.size() == recs.size());
        CHECK(*seen.rbegin() == recs.size() - 1);
    }
}

TEST_CASE("cross-validation needs enough configurations") {
    const auto recs = mac_world(LayerKind::Linear, 5, 1);
    CHECK_THROWS_AS(cv_folds(recs, 10, 0), TooFewRecords);
    CHECK_THROWS_AS(cv_folds(recs, 1, 0), ValidationError);
}

TEST_CASE("noiseless linear data cross-validates to r2 = 1") {
    const auto recs = mac_world(LayerKind::Conv2d, 200, 3);
    const auto cv = cross_validate(recs, mac_ols, 10, 1);
    CHECK(cv.fold_r2.size() == 10);
    CHECK(cv.mean_r2 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cv.mean_mse < 1e-18);
    CHECK(cv.std_r2 >= 0.0);
}

TEST_CASE("cross-validation is deterministic in its seed") {
    const auto recs = mac_world(LayerKind::Linear, 120, 8, 0.05);
    const auto a = cross_validate(recs, mac_ols, 5, 7);
    const auto b = cross_validate(recs, mac_ols, 5, 7);
    CHECK(a.fold_r2 == b.fold_r2);
    CHECK(a.fold_mse == b.fold_mse);
}

TEST_CASE("fitted pipeline predicts joules") {
    const auto recs = mac_world(LayerKind::Linear, 100, 4);
    const auto fitted = fit_pipeline(recs, mac_ols);
    for (const auto& rec : recs) {
        CHECK(fitted.predict_joules(rec.config, rec.macs) == doctest::Approx(rec.cpu_energy_j).epsilon(1e-9));
    }
    CHECK(evaluate_pipeline(fitted, recs).r2 == doctest::Approx(1.0));
    CHECK(evaluate_pipeline_joules(fitted, recs).max_error < 1e-12);
}

TEST_CASE("grid search") {
    const auto recs = mac_world(LayerKind::Linear, 200, 5);
    const auto parts = split(recs, {.seed = 1});
    const PipelineSpec spec{{FeatureSetKind::ParameterMacSet, {1, false}, ScalerKind::ZScore}, ModelKind::Lasso};

    SUBCASE("singleton grid") {
        CHECK(grid_search_lambda(parts.train, parts.val, spec, {0.0}).best_lambda == 0.0);
    }
    SUBCASE("penalty only hurts on noiseless data") {
        CHECK(grid_search_lambda(parts.train, parts.val, spec, {0.0, 1e6}).best_lambda == 0.0);
    }
    SUBCASE("ties go to the larger penalty") {
        // Both penalties exceed the kill threshold: identical constant models.
        const auto r = grid_search_lambda(parts.train, parts.val, spec, {1e3, 1e6, 1e4});
        CHECK(r.val_r2[0] == r.val_r2[1]);
        CHECK(r.best_lambda == 1e6);
    }
    SUBCASE("empty grid") {
        CHECK_THROWS_AS(grid_search_lambda(parts.train, parts.val, spec, {}), ValidationError);
    }
}

TEST_CASE("selected lasso recovers a sparse support") {
    // Ten independent features, the target depends on two of them.
    Rng rng(21);
    auto make = [&](int n) {
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (int i = 0; i < n; ++i) {
            std::vector<double> row(10);
            for (auto& v : row) v = rng.normal();
            xs.push_back(row);
            ys.push_back(3.0 * row[2] - 2.0 * row[7] + 0.01 * rng.normal());
        }
        Eigen::MatrixXd x(n, 10);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 10; ++j) x(i, j) = xs[i][j];
            y(i) = ys[i];
        }
        return DesignMatrix{{}, x, y};
    };
    const auto train = make(300);
    const auto val = make(100);
    double best_r2 = -INFINITY;
    double best_lambda = 0.0;
    for (const double lambda : {0.005, 0.01, 0.05, 0.1, 0.5}) {
        const double r2 = evaluate(fit_lasso(train, lambda), val).r2;
        if (r2 >= best_r2) {
            best_r2 = r2;
            best_lambda = lambda;
        }
    }
    const auto model = fit_lasso(train, best_lambda);
    for (int j = 0; j < 10; ++j) {
        if (j == 2 || j == 7) CHECK(model.coefficients(j) != 0.0);
        else CHECK(model.coefficients(j) == 0.0);
    }
}

TEST_CASE("merging real configurations never lowers validation r2 on real data") {
    // Random configs follow one slope, the real-architecture configs a
    // slightly different one; merging them into training must not hurt.
    auto random = mac_world(LayerKind::Linear, 150, 6, 0.01);
    std::vector<MeasurementRecord> real;
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
        auto rec = linear(rng.uniform_int(1, 256), 512 * rng.uniform_int(1, 8), 512 * rng.uniform_int(1, 8), 0.0);
        rec.cpu_energy_j = 2.6e-10 * static_cast<double>(rec.macs) + 1e-4;
        rec.source = RecordSource::RealArchitecture;
        real.push_back(rec);
    }
    const auto real_split = split(real, {.seed = 2});
    const auto base = fit_pipeline(random, mac_ols);
    const auto merged = fit_pipeline(merge_real_configs(random, real_split.train), mac_ols);
    CHECK(evaluate_pipeline_joules(merged, real_split.val).r2 >= evaluate_pipeline_joules(base, real_split.val).r2);
}
