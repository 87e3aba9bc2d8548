#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mvlat/eval.hpp"
#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/model.hpp"
#include "mvlat/rng.hpp"
#include "mvlat/synth.hpp"
#include "mvlat/trainer.hpp"

using namespace mvlat;

namespace {

Mlp identity_net(std::size_t dim) {
    Mlp net = make_mlp(dim, dim, 1, dim, Activation::identity);
    for (auto& layer : net.layers) {
        for (std::size_t k = 0; k < layer.w.size(); ++k) layer.w.data()[k] = 0.0;
        for (std::size_t i = 0; i < dim; ++i) layer.w(i, i) = 1.0;
        for (auto& v : layer.b) v = 0.0;
    }
    return net;
}

// Scalar encoder computing w0*z + w1*c exactly.
Mlp linear_encoder(double w0, double w1) {
    Mlp net = make_mlp(2, 2, 1, 1, Activation::identity);
    auto& l0 = net.layers[0];
    for (std::size_t k = 0; k < l0.w.size(); ++k) l0.w.data()[k] = 0.0;
    l0.w(0, 0) = 1.0;
    l0.w(1, 1) = 1.0;
    for (auto& v : l0.b) v = 0.0;
    auto& l1 = net.layers[1];
    l1.w(0, 0) = w0;
    l1.w(0, 1) = w1;
    l1.b[0] = 0.0;
    return net;
}

Mat gaussian_mat(std::size_t n, std::size_t d, Rng& rng) {
    Mat m(n, d);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
    return m;
}

} // namespace

TEST_CASE("kde_mi calibration on Gaussians", "[eval][kde]") {
    const std::size_t n = 5000;
    Rng rng(1);
    Mat x(n, 1), y_ind(n, 1), y_cor(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        y_ind(i, 0) = rng.normal();
        y_cor(i, 0) = 0.9 * x(i, 0) + std::sqrt(1.0 - 0.81) * rng.normal();
    }
    SECTION("independent standard normals sit in the noise band") {
        CHECK(std::abs(kde_mi(x, y_ind)) <= 0.05);
    }
    SECTION("correlation 0.9 recovers the closed form") {
        const double closed_form = -0.5 * std::log(1.0 - 0.81);  // 0.8304
        CHECK(kde_mi(x, y_cor) == Catch::Approx(closed_form).margin(0.15));
    }
    SECTION("degenerate copy saturates at the leave-one-out ceiling") {
        // Regression value for this estimator at N = 5000; theory diverges,
        // leave-one-out caps it near (1/5) ln N plus a constant.
        const double v = kde_mi(x, x);
        CHECK(v >= 1.8);
        CHECK(v <= 1.95);
    }
}

TEST_CASE("kde_mi symmetry and affine invariance", "[eval][kde]") {
    Rng rng(2);
    const std::size_t n = 300;
    Mat x(n, 2), y(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        y(i, 0) = 0.5 * x(i, 0) + rng.laplace(1.0);
    }
    SECTION("argument order does not matter") {
        CHECK(std::abs(kde_mi(x, y) - kde_mi(y, x)) <= 1e-10);
    }
    SECTION("positive-scale affine maps leave the value unchanged") {
        const double base = kde_mi(x, y);
        Mat xs = x, ys = y;
        for (std::size_t i = 0; i < n; ++i) {
            xs(i, 0) = 0.25 * x(i, 0) + 11.0;
            xs(i, 1) = 3.0 * x(i, 1) - 5.0;
            ys(i, 0) = 42.0 * y(i, 0) + 1000.0;
        }
        CHECK(std::abs(kde_mi(xs, ys) - base) <= 1e-8);
    }
}

TEST_CASE("kde_mi input validation", "[eval][kde]") {
    Rng rng(3);
    const Mat ok = gaussian_mat(60, 1, rng);
    SECTION("row mismatch") {
        CHECK_THROWS_AS(kde_mi(ok, gaussian_mat(61, 1, rng)), std::invalid_argument);
    }
    SECTION("too few samples") {
        CHECK_THROWS_WITH(kde_mi(gaussian_mat(49, 1, rng), gaussian_mat(49, 1, rng)),
                          Catch::Matchers::ContainsSubstring("at least 50"));
    }
    SECTION("joint dimension cap") {
        CHECK_THROWS_WITH(kde_mi(gaussian_mat(60, 3, rng), gaussian_mat(60, 2, rng)),
                          Catch::Matchers::ContainsSubstring("exceeds 4"));
    }
    SECTION("empty marginal") {
        CHECK_THROWS_AS(kde_mi(ok, Mat(60, 0)), std::invalid_argument);
    }
    SECTION("zero variance") {
        Mat flat(60, 1);
        for (std::size_t i = 0; i < 60; ++i) flat(i, 0) = 2.5;
        CHECK_THROWS_WITH(kde_mi(ok, flat), Catch::Matchers::ContainsSubstring("zero variance"));
    }
}

TEST_CASE("jacobian energy metric on exact hooks", "[eval][jacobian]") {
    Rng rng(4);
    const std::size_t n = 500;
    const Mat z = gaussian_mat(n, 1, rng);
    const Mat c = gaussian_mat(n, 1, rng);
    const Mlp mixer = identity_net(2);

    SECTION("no c-dependence gives exactly zero") {
        const JacobianMetricResult res =
            jacobian_energy_metric(linear_encoder(1.0, 0.0), mixer, z, c, 0.1, 1);
        CHECK(res.value == 0.0);
        CHECK(res.used + res.skipped == n);
        CHECK(res.used > 0);
    }
    SECTION("affine leak of 0.1 gives 0.01, any step size") {
        for (double delta : {0.05, 0.3}) {
            const JacobianMetricResult res =
                jacobian_energy_metric(linear_encoder(1.0, 0.1), mixer, z, c, delta, 1);
            CHECK(res.value == Catch::Approx(0.01).margin(1e-6));
        }
    }
    SECTION("default step is 1e-3 of the private std") {
        const JacobianMetricResult res =
            jacobian_energy_metric(linear_encoder(1.0, 0.1), mixer, z, c, 0.0, 1);
        REQUIRE(res.deltas.size() == 1);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += c(i, 0);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (c(i, 0) - mean) * (c(i, 0) - mean);
        var /= static_cast<double>(n - 1);
        CHECK(res.deltas[0] == Catch::Approx(1e-3 * std::sqrt(var)).epsilon(1e-12));
        CHECK(res.value == Catch::Approx(0.01).margin(1e-6));
    }
}

TEST_CASE("jacobian energy metric converges at second order", "[eval][jacobian]") {
    Rng rng(5);
    const std::size_t n = 400;
    const Mat z = gaussian_mat(n, 1, rng);
    // Interior private values plus 1% sacrificial mass at each extreme: the
    // percentile range then spans the anchors, every interior row survives
    // any step below, and the kept row set is identical across step sizes.
    Mat c(n, 1);
    for (std::size_t i = 0; i < n; ++i) c(i, 0) = rng.uniform(-0.5, 0.5);
    for (std::size_t i = 0; i < 4; ++i) c(i, 0) = -3.0;
    for (std::size_t i = 4; i < 8; ++i) c(i, 0) = 3.0;

    Mlp enc = make_mlp(2, 8, 1, 1, Activation::tanh_act);
    init_params(enc, rng);
    for (auto& layer : enc.layers)
        for (std::size_t k = 0; k < layer.w.size(); ++k) layer.w.data()[k] *= 2.0;

    const Mlp mixer = identity_net(2);
    auto value_at = [&](double delta) {
        const JacobianMetricResult res = jacobian_energy_metric(enc, mixer, z, c, delta, 1);
        REQUIRE(res.used == n - 8);
        return res.value;
    };
    const double m4 = value_at(0.4);
    const double m2 = value_at(0.2);
    const double m1 = value_at(0.1);
    const double d1 = std::abs(m4 - m2);
    const double d2 = std::abs(m2 - m1);
    INFO("m(0.4) = " << m4 << ", m(0.2) = " << m2 << ", m(0.1) = " << m1);
    REQUIRE(d1 > 1e-7);
    CHECK(d2 <= 0.35 * d1);
    CHECK(m1 >= 0.0);
}

TEST_CASE("jacobian energy metric support margin and errors", "[eval][jacobian]") {
    Rng rng(6);
    const std::size_t n = 200;
    const Mat z = gaussian_mat(n, 2, rng);
    const Mat c = gaussian_mat(n, 1, rng);
    const Mlp mixer = identity_net(3);
    Mlp enc = make_mlp(3, 8, 1, 2, Activation::relu);
    init_params(enc, rng);

    SECTION("edge rows are skipped, interior kept") {
        const JacobianMetricResult res = jacobian_energy_metric(enc, mixer, z, c, 0.05, 2);
        CHECK(res.value >= 0.0);
        CHECK(res.skipped > 0);
        CHECK(res.used + res.skipped == n);
    }
    SECTION("a huge step skips every row") {
        CHECK_THROWS_WITH(jacobian_energy_metric(enc, mixer, z, c, 100.0, 2),
                          Catch::Matchers::ContainsSubstring("support margin"));
    }
    SECTION("shape validation") {
        CHECK_THROWS_AS(jacobian_energy_metric(enc, mixer, z, gaussian_mat(n + 1, 1, rng), 0.1, 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(jacobian_energy_metric(enc, identity_net(2), z, c, 0.1, 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(jacobian_energy_metric(identity_net(4), mixer, z, c, 0.1, 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(jacobian_energy_metric(enc, mixer, z, c, 0.1, 3),
                        std::invalid_argument);
    }
}

TEST_CASE("mi report on identity encoders recovers the ground truth split", "[eval][report]") {
    GenConfig cfg;
    cfg.n = 2000;
    cfg.seed = 7;
    const Dataset ds = generate_with_mixers(cfg, 7, identity_net(3), identity_net(3));
    ModelBundle bundle = default_bundle(ModelDims{2, 1, 1, 3, 3}, 8, 2, 7);
    bundle.f1 = identity_net(3);
    bundle.f2 = identity_net(3);

    const MiReport r = mi_report(bundle, ds);
    // zhat == z and chat == c exactly, so the diagonal entries saturate and
    // the cross entries sit at the independence noise floor.
    CHECK(r.z1_z >= 1.5);
    CHECK(r.z2_z >= 1.5);
    CHECK(r.c1_c1 >= 1.3);
    CHECK(r.c2_c2 >= 1.3);
    CHECK(std::abs(r.z1_c1) <= 0.15);
    CHECK(std::abs(r.z2_c2) <= 0.15);
    CHECK(std::abs(r.c1_z) <= 0.15);
    CHECK(std::abs(r.c2_z) <= 0.15);
    for (double v : r.values()) CHECK(v >= -0.2);
}

TEST_CASE("mi report smoke on an untrained bundle", "[eval][report]") {
    GenConfig cfg;
    cfg.n = 400;
    cfg.seed = 8;
    const Dataset ds = generate(cfg);
    const ModelBundle bundle = default_bundle(ModelDims{2, 1, 1, 3, 3}, 8, 2, 8);
    const MiReport r = mi_report(bundle, ds);
    for (double v : r.values()) {
        CHECK(std::isfinite(v));
        CHECK(v >= -0.2);
    }
    SECTION("wrong ambient dimension propagates") {
        const ModelBundle bad = default_bundle(ModelDims{2, 1, 1, 4, 3}, 8, 2, 8);
        CHECK_THROWS_AS(mi_report(bad, ds), std::exception);
    }
}

TEST_CASE("mi report column order matches the field order", "[eval][report]") {
    MiReport r;
    r.z1_z = 1; r.z2_z = 2; r.z1_c1 = 3; r.z2_c2 = 4;
    r.c1_c1 = 5; r.c2_c2 = 6; r.c1_z = 7; r.c2_z = 8;
    const auto v = r.values();
    for (std::size_t i = 0; i < 8; ++i) CHECK(v[i] == static_cast<double>(i + 1));
    const auto& names = MiReport::column_names();
    REQUIRE(names.size() == 8);
    CHECK(names.front() == "mi_z1_z");
    CHECK(names[4] == "mi_c1_c1");
    CHECK(names.back() == "mi_c2_z");
}

TEST_CASE("sample size trend bookkeeping", "[eval][trend]") {
    GenConfig gen;
    TrainConfig tr;
    tr.batch_b1 = 32;
    tr.batch_b2 = 32;
    tr.inner_epochs = 1;
    tr.max_outer_iters = 1;
    tr.stop_matching_loss = 0.0;

    SECTION("input validation") {
        CHECK_THROWS_AS(sample_size_trend(gen, tr, 8, 2, 0.05, {}, {1}), std::invalid_argument);
        CHECK_THROWS_AS(sample_size_trend(gen, tr, 8, 2, 0.05, {100, 100}, {1}),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample_size_trend(gen, tr, 8, 2, 0.05, {100, 50}, {1}),
                        std::invalid_argument);
        CHECK_THROWS_AS(sample_size_trend(gen, tr, 8, 2, 0.05, {100}, {}), std::invalid_argument);
    }
    SECTION("single cell runs and is deterministic") {
        const auto rows = sample_size_trend(gen, tr, 8, 2, 0.05, {64}, {1, 2});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].n == 64);
        CHECK(rows[0].failures == 0);
        CHECK(rows[0].mean_metric >= 0.0);
        CHECK(std::isfinite(rows[0].mean_metric));
        const auto again = sample_size_trend(gen, tr, 8, 2, 0.05, {64}, {1, 2});
        CHECK(again[0].mean_metric == rows[0].mean_metric);
    }
    SECTION("per-cell failures are recorded, not fatal") {
        GenConfig bad = gen;
        bad.d_shared = 3;  // circle prior rejects non-2D shared draws
        const auto rows = sample_size_trend(bad, tr, 8, 2, 0.05, {64}, {1, 2});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].failures == 2);
        CHECK(rows[0].mean_metric == 0.0);
    }
}

TEST_CASE("shared consistency gap", "[eval][consistency]") {
    GenConfig cfg;
    cfg.n = 256;
    cfg.seed = 11;
    SECTION("identity encoder on identity mixers is perfectly consistent") {
        const Dataset ds = generate_with_mixers(cfg, 11, identity_net(3), identity_net(3));
        ModelBundle bundle = default_bundle(ModelDims{2, 1, 1, 3, 3}, 8, 2, 11);
        bundle.f1 = identity_net(3);
        CHECK(shared_consistency_gap(bundle, ds, 100, 99) <= 1e-18);
    }
    SECTION("a random encoder leaks private variation") {
        const Dataset ds = generate(cfg);
        const ModelBundle bundle = default_bundle(ModelDims{2, 1, 1, 3, 3}, 8, 2, 11);
        const double gap = shared_consistency_gap(bundle, ds, 100, 99);
        CHECK(gap > 0.0);
        CHECK(std::isfinite(gap));
    }
    SECTION("private rescaling target from provenance is honored") {
        GenConfig scaled = cfg;
        scaled.target_spr_db1 = -6.0;
        const Dataset ds = generate(scaled);
        const ModelBundle bundle = default_bundle(ModelDims{2, 1, 1, 3, 3}, 8, 2, 11);
        const double gap = shared_consistency_gap(bundle, ds, 100, 99);
        CHECK(gap >= 0.0);
        CHECK(std::isfinite(gap));
    }
}
