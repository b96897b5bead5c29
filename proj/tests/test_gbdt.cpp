#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "quadmix/gbdt.hpp"
#include "quadmix/rng.hpp"
#include "test_util.hpp"

using namespace quadmix;

namespace {

// Smooth synthetic landscape for generalization checks.
double smooth_target(std::span<const double> x) {
    double v = std::sin(3.0 * x[0]);
    if (x.size() > 1) v += 0.5 * x[1] * x[1];
    if (x.size() > 2) v -= 0.7 * x[2];
    if (x.size() > 3) v += 0.3 * x[0] * x[3];
    return v;
}

struct Dataset {
    std::vector<double> X;
    std::vector<double> y;
    std::size_t d = 0;
};

Dataset make_dataset(std::size_t k, std::size_t d, std::uint64_t seed, double noise = 0.0) {
    Dataset ds;
    ds.d = d;
    ds.X.resize(k * d);
    ds.y.resize(k);
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) ds.X[i * d + j] = rng.next_double();
        ds.y[i] = smooth_target(std::span<const double>(ds.X.data() + i * d, d)) + noise * rng.next_normal();
    }
    return ds;
}

double training_mse_at_stage(const GBDTModel& model, const Dataset& ds, std::size_t stage) {
    double sse = 0.0;
    for (std::size_t i = 0; i < ds.y.size(); ++i) {
        const double pred = model.predict_prefix(std::span<const double>(ds.X.data() + i * ds.d, ds.d), stage);
        sse += (ds.y[i] - pred) * (ds.y[i] - pred);
    }
    return sse / static_cast<double>(ds.y.size());
}

}  // namespace

TEST_CASE("constant targets collapse to the constant prediction") {
    const std::size_t k = 64;
    Dataset ds = make_dataset(k, 3, 1);
    std::fill(ds.y.begin(), ds.y.end(), 3.25);
    TrainConfig cfg;
    cfg.n_trees = 20;
    cfg.seed = 7;
    const GBDTModel model = fit(ds.X, ds.d, ds.y, cfg);
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> x{rng.next_double(), rng.next_double(), rng.next_double()};
        CHECK(model.predict(x) == doctest::Approx(3.25).epsilon(1e-12));
    }
}

TEST_CASE("a single depth-1 tree reproduces a split-separable function") {
    std::vector<double> X{0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> y{1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0};
    TrainConfig cfg;
    cfg.n_trees = 1;
    cfg.max_depth = 1;
    cfg.learning_rate = 1.0;
    cfg.min_samples_leaf = 1;
    cfg.subsample = 1.0;
    const GBDTModel model = fit(X, 1, y, cfg);
    for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(model.predict(std::span<const double>(&X[i], 1)) == doctest::Approx(y[i]).epsilon(1e-9));
    }
}

TEST_CASE("training MSE is non-increasing per boosting stage") {
    const Dataset ds = make_dataset(600, 5, 3, 0.05);
    TrainConfig cfg;
    cfg.n_trees = 80;
    cfg.seed = 11;
    const GBDTModel model = fit(ds.X, ds.d, ds.y, cfg);
    double prev = training_mse_at_stage(model, ds, 0);
    for (std::size_t t = 1; t <= model.trees.size(); ++t) {
        const double cur = training_mse_at_stage(model, ds, t);
        CHECK(cur <= prev);
        prev = cur;
    }
    CHECK(training_mse_at_stage(model, ds, model.trees.size()) < training_mse_at_stage(model, ds, 1));
}

TEST_CASE("refits are byte-identical") {
    const Dataset ds = make_dataset(400, 6, 4, 0.1);
    TrainConfig cfg;
    cfg.n_trees = 40;
    cfg.seed = 13;
    const GBDTModel a = fit(ds.X, ds.d, ds.y, cfg);
    const GBDTModel b = fit(ds.X, ds.d, ds.y, cfg);
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("model serialization round-trips through disk") {
    testutil::ScratchDir dir("gbdt_io");
    const Dataset ds = make_dataset(300, 4, 5);
    TrainConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = 17;
    const GBDTModel model = fit(ds.X, ds.d, ds.y, cfg);
    model.save(dir.file("model.json"));
    const GBDTModel back = GBDTModel::load(dir.file("model.json"));
    CHECK(back.to_json().dump() == model.to_json().dump());
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> x{rng.next_double(), rng.next_double(), rng.next_double(), rng.next_double()};
        CHECK(back.predict(x) == model.predict(x));
    }
}

TEST_CASE("tree depth respects the configured maximum") {
    const Dataset ds = make_dataset(500, 4, 7, 0.02);
    TrainConfig cfg;
    cfg.n_trees = 30;
    cfg.max_depth = 3;
    cfg.seed = 19;
    const GBDTModel model = fit(ds.X, ds.d, ds.y, cfg);
    for (const auto& t : model.trees) {
        CHECK(t.depth() <= 3);
    }
}

TEST_CASE("an empty ensemble predicts the base value") {
    GBDTModel model;
    model.n_features = 2;
    model.base_prediction = 1.5;
    model.learning_rate = 0.1;
    const std::vector<double> x{0.3, 0.4};
    CHECK(model.predict(x) == 1.5);
}

TEST_CASE("unsplit features never affect the prediction") {
    const Dataset ds = make_dataset(200, 3, 8);
    Dataset aug;
    aug.d = 4;
    aug.y = ds.y;
    aug.X.resize(ds.y.size() * 4);
    for (std::size_t i = 0; i < ds.y.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) aug.X[i * 4 + j] = ds.X[i * 3 + j];
        aug.X[i * 4 + 3] = 0.5;  // constant feature: no split can use it
    }
    TrainConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = 23;
    const GBDTModel model = fit(aug.X, aug.d, aug.y, cfg);
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x{rng.next_double(), rng.next_double(), rng.next_double(), 0.5};
        const double before = model.predict(x);
        x[3] = rng.next_double();
        CHECK(model.predict(x) == before);
    }
}

TEST_CASE("predictions stay within the target range for full-pass fits") {
    for (const double lr : {0.05, 0.3, 1.0}) {
        const Dataset ds = make_dataset(400, 4, 29, 0.05);
        TrainConfig cfg;
        cfg.n_trees = 60;
        cfg.learning_rate = lr;
        cfg.subsample = 1.0;
        cfg.seed = 31;
        const GBDTModel model = fit(ds.X, ds.d, ds.y, cfg);
        const double lo = *std::min_element(ds.y.begin(), ds.y.end());
        const double hi = *std::max_element(ds.y.begin(), ds.y.end());
        Rng rng(8);
        for (int trial = 0; trial < 200; ++trial) {
            const std::vector<double> x{rng.next_double(), rng.next_double(), rng.next_double(), rng.next_double()};
            const double p = model.predict(x);
            CHECK(p >= lo - 1e-9);
            CHECK(p <= hi + 1e-9);
        }
    }
}

TEST_CASE("fit rejects degenerate inputs") {
    TrainConfig cfg;
    CHECK_THROWS_AS(fit({0.5}, 1, {1.0}, cfg), DataError);    // one row
    CHECK_THROWS_AS(fit({}, 0, {1.0, 2.0}, cfg), DataError);  // zero features
    CHECK_THROWS_AS(fit({0.5, 0.6}, 1, {1.0, std::nan("")}, cfg), DataError);
    TrainConfig bad;
    bad.subsample = 0.0;
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("mae evaluation matches hand computations") {
    GBDTModel model;
    model.n_features = 1;
    model.base_prediction = 1.0;
    model.learning_rate = 1.0;
    const std::vector<double> X{0.1};
    const std::vector<double> y{3.0};
    const EvalReport rep = evaluate_mae(model, X, 1, y);
    CHECK(rep.mae == doctest::Approx(2.0));
    REQUIRE(rep.residuals.size() == 1);
    CHECK(rep.residuals[0] == doctest::Approx(2.0));

    const std::vector<double> y_eq{1.0};
    CHECK(evaluate_mae(model, X, 1, y_eq).mae == doctest::Approx(0.0));
    CHECK_THROWS_AS(evaluate_mae(model, {}, 1, {}), DataError);
}

TEST_CASE("validation error shrinks with more training data") {
    const std::size_t d = 5;
    const Dataset val = make_dataset(200, d, 101, 0.02);
    const std::vector<std::size_t> sizes{500, 1000, 2000, 2800};
    std::vector<std::vector<double>> maes_per_size;
    for (const std::size_t size : sizes) {
        std::vector<double> maes;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Dataset train = make_dataset(size, d, 200 + seed, 0.02);
            TrainConfig cfg;
            cfg.n_trees = 60;
            cfg.seed = seed;
            const GBDTModel model = fit(train.X, d, train.y, cfg);
            maes.push_back(evaluate_mae(model, val.X, d, val.y).mae);
        }
        maes_per_size.push_back(maes);
    }
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        CHECK(testutil::median(maes_per_size[i]) < testutil::median(maes_per_size[i - 1]));
    }
}
