#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "mvlat/gradcheck.hpp"
#include "mvlat/losses.hpp"
#include "mvlat/mat.hpp"
#include "mvlat/rng.hpp"

using namespace mvlat;

namespace {

Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    return gradcheck_detail::random_mat(rows, cols, rng, scale);
}

// b x d matrix with zero-mean columns and (1/b) Z^T Z == I, built by
// orthonormalizing a centered random draw through the SVD.
Mat whitened_batch(std::size_t b, std::size_t d, Rng& rng) {
    const Mat yt = center_columns(transpose(random_mat(b, d, rng)));  // d x b
    const Svd svd = small_svd(yt);
    Mat z = matmul_nt(svd.t, svd.s);               // b x d, orthonormal columns
    z *= std::sqrt(static_cast<double>(b));
    return z;
}

double frobenius_max(const Mat& m) {
    double mx = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) mx = std::max(mx, std::abs(m.data()[k]));
    return mx;
}

} // namespace

TEST_CASE("matching loss: hand values and error paths", "[losses]") {
    SECTION("perfect match is zero") {
        Rng rng(11);
        const Mat u = random_mat(7, 3, rng);
        const LossValue lv = matching_loss(u, u, u);
        CHECK(lv.value == 0.0);
        CHECK(frobenius_max(lv.grads[0]) == 0.0);
        CHECK(frobenius_max(lv.grads[1]) == 0.0);
    }
    SECTION("single sample, single dim") {
        const Mat u = Mat::from_rows({{0.0}});
        const Mat z1 = Mat::from_rows({{1.0}});
        const Mat z2 = Mat::from_rows({{-1.0}});
        const LossValue lv = matching_loss(u, z1, z2);
        CHECK(lv.value == Catch::Approx(2.0).margin(1e-15));
        CHECK(lv.grads[0](0, 0) == Catch::Approx(2.0).margin(1e-15));
        CHECK(lv.grads[1](0, 0) == Catch::Approx(-2.0).margin(1e-15));
    }
    SECTION("strictly positive when any pair differs") {
        Rng rng(12);
        const Mat u = random_mat(5, 2, rng);
        Mat z1 = u;
        z1(3, 1) += 1e-3;
        CHECK(matching_loss(u, z1, u).value > 0.0);
        CHECK(matching_loss(u, u, z1).value > 0.0);
    }
    SECTION("shape mismatch and empty batch") {
        const Mat u(4, 2), z(4, 3), e(0, 2);
        CHECK_THROWS_AS(matching_loss(u, z, z), std::invalid_argument);
        CHECK_THROWS_AS(matching_loss(e, e, e), std::invalid_argument);
    }
}

TEST_CASE("matching loss equals trace-correlation objective on whitened batches", "[losses]") {
    Rng rng(21);
    const std::size_t b = 64, d = 3;
    const Mat z1 = whitened_batch(b, d, rng);
    const Mat z2 = whitened_batch(b, d, rng);

    // Construction self-check: zero column means, (1/b) Z^T Z = I.
    for (const Mat* z : {&z1, &z2}) {
        Mat gram = matmul_tn(*z, *z);
        gram *= 1.0 / static_cast<double>(b);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                CHECK(gram(i, j) == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-10));
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < b; ++i) s += (*z)(i, j);
            CHECK(std::abs(s) < 1e-9);
        }
    }

    const Mat cross = matmul_tn(z1, z2);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += cross(i, i) / static_cast<double>(b);
    const double expected = 2.0 * static_cast<double>(d) - 2.0 * trace;
    CHECK(matching_loss(z1, z1, z2).value == Catch::Approx(expected).margin(1e-8));
}

TEST_CASE("reconstruction loss: hand values", "[losses]") {
    SECTION("exact reconstruction") {
        Rng rng(31);
        const Mat x = random_mat(6, 4, rng);
        CHECK(recon_loss(x, x).value == 0.0);
    }
    SECTION("unit error") {
        const Mat x = Mat::from_rows({{1.0, 0.0}});
        const Mat xhat = Mat::from_rows({{0.0, 0.0}});
        const LossValue lv = recon_loss(x, xhat);
        CHECK(lv.value == Catch::Approx(1.0).margin(1e-15));
        CHECK(lv.grads[0](0, 0) == Catch::Approx(-2.0).margin(1e-15));
        CHECK(lv.grads[0](0, 1) == 0.0);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(recon_loss(Mat(2, 2), Mat(2, 3)), std::invalid_argument);
    }
}

TEST_CASE("independence estimator: frozen correlations", "[losses]") {
    const Mat up = Mat::from_rows({{1.0}, {2.0}, {3.0}});
    const Mat down = Mat::from_rows({{3.0}, {2.0}, {1.0}});
    CHECK(indep_reg_batch(up, up).value == Catch::Approx(1.0).margin(1e-6));
    CHECK(indep_reg_batch(up, down).value == Catch::Approx(1.0).margin(1e-6));

    // Exactly zero covariance: the smoothed |.| floors the value at sqrt(eps).
    const Mat alt = Mat::from_rows({{1.0}, {-1.0}, {1.0}, {-1.0}});
    const Mat pair = Mat::from_rows({{1.0}, {1.0}, {-1.0}, {-1.0}});
    const double v = indep_reg_batch(alt, pair).value;
    CHECK(v == Catch::Approx(std::sqrt(kIndepEpsAbs)).epsilon(1e-6));

    CHECK_THROWS_AS(indep_reg_batch(Mat(1, 1), Mat(1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(indep_reg_batch(Mat(4, 2), Mat(4, 2)), std::invalid_argument);
}

TEST_CASE("independence estimator is affine invariant", "[losses]") {
    Rng rng(41);
    Mat phi = random_mat(64, 1, rng);
    Mat tau = random_mat(64, 1, rng);
    // Correlate them a bit so the value is not at the eps floor.
    for (std::size_t i = 0; i < 64; ++i) tau(i, 0) += 0.5 * phi(i, 0);
    const double base = indep_reg_batch(phi, tau).value;
    REQUIRE(base > 0.1);

    SECTION("positive-slope reparameterization") {
        Mat p2 = phi, t2 = tau;
        for (std::size_t i = 0; i < 64; ++i) {
            p2(i, 0) = 2.3 * phi(i, 0) + 0.31;
            t2(i, 0) = 0.7 * tau(i, 0) - 1.13;
        }
        CHECK(indep_reg_batch(p2, t2).value == Catch::Approx(base).margin(1e-7));
    }
    SECTION("sign flip leaves the absolute correlation unchanged") {
        Mat p2 = phi;
        for (std::size_t i = 0; i < 64; ++i) p2(i, 0) = -phi(i, 0);
        CHECK(indep_reg_batch(p2, tau).value == Catch::Approx(base).margin(1e-9));
    }
    SECTION("large shared shift survives the two-pass centering") {
        Mat p2 = phi, t2 = tau;
        for (std::size_t i = 0; i < 64; ++i) {
            p2(i, 0) += 1000.0;
            t2(i, 0) -= 1000.0;
        }
        CHECK(indep_reg_batch(p2, t2).value == Catch::Approx(base).margin(1e-6));
    }
}

TEST_CASE("independence estimator gradients match finite differences", "[losses]") {
    Rng rng(42);
    Mat phi = random_mat(16, 1, rng);
    Mat tau = random_mat(16, 1, rng);
    for (std::size_t i = 0; i < 16; ++i) tau(i, 0) += 0.3 * phi(i, 0);
    const LossValue lv = indep_reg_batch(phi, tau);
    const auto res = check_matrix_grads(
        "indep", {&phi, &tau}, [&] { return indep_reg_batch(phi, tau).value; }, lv.grads);
    INFO(res.name << " max_rel_err=" << res.max_rel_err);
    CHECK(res.pass);
    CHECK(res.checked == 32);
}

TEST_CASE("median bandwidth", "[losses]") {
    const Mat two = Mat::from_rows({{0.0, 0.0}, {3.0, 4.0}});
    CHECK(median_bandwidth(two) == Catch::Approx(5.0));

    // Pairwise distances {1, 3, 2}; the upper median is 2.
    const Mat three = Mat::from_rows({{0.0}, {1.0}, {3.0}});
    CHECK(median_bandwidth(three) == Catch::Approx(2.0));

    const Mat same = Mat::from_rows({{1.0}, {1.0}, {1.0}});
    CHECK(median_bandwidth(same) == Catch::Approx(1e-12));

    CHECK_THROWS_AS(median_bandwidth(Mat(1, 3)), std::invalid_argument);
}

TEST_CASE("hsic: degenerate, symmetric, and dependence-ordering behavior", "[losses]") {
    Rng rng(51);
    SECTION("constant second argument gives exactly zero") {
        const Mat a = random_mat(8, 2, rng);
        Mat b(8, 3);
        for (std::size_t k = 0; k < b.size(); ++k) b.data()[k] = 0.7;
        const LossValue lv = hsic_batch(a, b, 1.0, 1.0);
        CHECK(std::abs(lv.value) < 1e-14);
        CHECK(frobenius_max(lv.grads[0]) < 1e-14);
        CHECK(frobenius_max(lv.grads[1]) < 1e-14);
    }
    SECTION("symmetry under argument swap") {
        const Mat a = random_mat(10, 2, rng);
        const Mat b = random_mat(10, 4, rng);
        const double ab = hsic_batch(a, b, 0.8, 1.7).value;
        const double ba = hsic_batch(b, a, 1.7, 0.8).value;
        CHECK(ab == Catch::Approx(ba).margin(1e-14));
    }
    SECTION("identical views score above an independent pair on the same draw") {
        const std::size_t b = 256;
        const Mat a = random_mat(b, 2, rng);
        const Mat other = random_mat(b, 2, rng);
        const double bw_a = median_bandwidth(a);
        const double dependent = hsic_batch(a, a, bw_a, bw_a).value;
        const double independent = hsic_batch(a, other, bw_a, median_bandwidth(other)).value;
        CHECK(dependent > independent);
        CHECK(dependent > 0.0);
    }
    SECTION("bandwidth validation") {
        const Mat a = random_mat(4, 2, rng);
        CHECK_THROWS_AS(hsic_batch(a, a, 0.0, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(hsic_batch(a, a, 1.0, -2.0), std::invalid_argument);
        CHECK_THROWS_AS(hsic_batch(a, Mat(5, 2), 1.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("hsic gradients match finite differences", "[losses]") {
    Rng rng(52);
    Mat a = random_mat(6, 2, rng);
    Mat b = random_mat(6, 3, rng);
    const LossValue lv = hsic_batch(a, b, 0.9, 1.3);
    const auto res = check_matrix_grads(
        "hsic", {&a, &b}, [&] { return hsic_batch(a, b, 0.9, 1.3).value; }, lv.grads);
    INFO(res.name << " max_rel_err=" << res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("barlow twins: frozen values", "[losses]") {
    Rng rng(61);
    SECTION("scalar anti-correlated views") {
        const Mat y1 = Mat::from_rows({{1.0}, {-1.0}, {2.0}, {-2.0}});
        Mat y2 = y1;
        for (std::size_t k = 0; k < y2.size(); ++k) y2.data()[k] = -y2.data()[k];
        CHECK(barlow_twins_loss(y1, y2, 0.5).value == Catch::Approx(4.0).margin(1e-12));
    }
    SECTION("identical views reduce to the off-diagonal term") {
        const std::size_t b = 32, d = 3;
        const Mat y = random_mat(b, d, rng);
        const double lambda = 0.37;
        // Reference: plain column correlation matrix of y.
        Mat c = detail::center_over_batch(y);
        std::vector<double> nrm(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < b; ++i) nrm[j] += c(i, j) * c(i, j);
            nrm[j] = std::sqrt(nrm[j]);
        }
        double offdiag = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                if (i == j) continue;
                double dot = 0.0;
                for (std::size_t k = 0; k < b; ++k) dot += c(k, i) * c(k, j);
                const double corr = dot / (nrm[i] * nrm[j]);
                offdiag += corr * corr;
            }
        CHECK(barlow_twins_loss(y, y, lambda).value ==
              Catch::Approx(lambda * offdiag).margin(1e-10));
        CHECK(barlow_twins_loss(y, y, 0.0).value == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("zero-variance column is rejected") {
        Mat y1 = random_mat(5, 2, rng);
        Mat y2 = y1;
        for (std::size_t i = 0; i < 5; ++i) y2(i, 1) = 4.2;
        CHECK_THROWS_AS(barlow_twins_loss(y1, y2, 0.5), std::invalid_argument);
    }
}

TEST_CASE("barlow twins gradients match finite differences", "[losses]") {
    Rng rng(62);
    Mat y1 = random_mat(8, 3, rng);
    Mat y2 = random_mat(8, 3, rng);
    const LossValue lv = barlow_twins_loss(y1, y2, 0.37);
    const auto res = check_matrix_grads(
        "barlow", {&y1, &y2}, [&] { return barlow_twins_loss(y1, y2, 0.37).value; }, lv.grads);
    INFO(res.name << " max_rel_err=" << res.max_rel_err);
    CHECK(res.pass);
}

TEST_CASE("infonce slack loss: frozen values", "[losses]") {
    SECTION("coincident matched slack rows give log K") {
        const std::size_t k = 5;
        Mat u(k, 2);
        for (std::size_t i = 0; i < k; ++i) {
            u(i, 0) = 0.4;
            u(i, 1) = -1.2;
        }
        const LossValue lv = infonce_slack_loss(u, u, u);
        CHECK(lv.value == Catch::Approx(std::log(static_cast<double>(k))).margin(1e-12));
    }
    SECTION("two separated rows") {
        const Mat u = Mat::from_rows({{0.0}, {1.0}});
        const LossValue lv = infonce_slack_loss(u, u, u);
        CHECK(lv.value == Catch::Approx(std::log(1.0 + std::exp(-1.0))).margin(1e-12));
        // Pure repulsion pushes the rows apart symmetrically.
        const double w = 2.0 / (1.0 + std::exp(1.0));
        CHECK(lv.grads[0](0, 0) == Catch::Approx(w).margin(1e-12));
        CHECK(lv.grads[0](1, 0) == Catch::Approx(-w).margin(1e-12));
        CHECK(frobenius_max(lv.grads[1]) == 0.0);
        CHECK(frobenius_max(lv.grads[2]) == 0.0);
    }
    SECTION("fewer than two rows is rejected") {
        CHECK_THROWS_AS(infonce_slack_loss(Mat(1, 2), Mat(1, 2), Mat(1, 2)),
                        std::invalid_argument);
    }
}

TEST_CASE("infonce slack gradients match finite differences", "[losses]") {
    Rng rng(71);
    Mat u = random_mat(6, 2, rng);
    Mat z1 = random_mat(6, 2, rng);
    Mat z2 = random_mat(6, 2, rng);
    const LossValue lv = infonce_slack_loss(u, z1, z2);
    const auto res = check_matrix_grads(
        "infonce", {&u, &z1, &z2}, [&] { return infonce_slack_loss(u, z1, z2).value; },
        lv.grads);
    INFO(res.name << " max_rel_err=" << res.max_rel_err);
    CHECK(res.pass);
    CHECK(res.checked == 36);
}

TEST_CASE("assemble_total mixes the gradient groups", "[losses]") {
    Rng rng(81);
    const Mat u = random_mat(4, 2, rng);
    const Mat z1 = random_mat(4, 2, rng);
    const Mat z2 = random_mat(4, 2, rng);
    const Mat x = random_mat(4, 3, rng);
    const Mat xhat = random_mat(4, 3, rng);
    Mat phi = random_mat(4, 1, rng);
    Mat tau = random_mat(4, 1, rng);

    const LossValue l = matching_loss(u, z1, z2);
    const LossValue v = recon_loss(x, xhat);
    const LossValue r = indep_reg_batch(phi, tau);

    SECTION("zero weights collapse to the matching term") {
        const TotalLoss t = assemble_total(l, v, {r}, 0.0, 0.0);
        CHECK(t.value == Catch::Approx(l.value).margin(1e-15));
        for (const Mat& g : t.v_grads) CHECK(frobenius_max(g) == 0.0);
        for (const Mat& g : t.r_grads) CHECK(frobenius_max(g) == 0.0);
    }
    SECTION("value is the weighted sum") {
        const TotalLoss t = assemble_total(l, v, {r, r}, 0.7, 0.3);
        CHECK(t.value ==
              Catch::Approx(l.value + 0.7 * v.value + 0.3 * 2.0 * r.value).margin(1e-12));
        REQUIRE(t.r_grads.size() == 4);  // two terms, two grads each
    }
    SECTION("beta scales the reconstruction gradient linearly") {
        const TotalLoss t1 = assemble_total(l, v, {}, 0.7, 0.0);
        const TotalLoss t2 = assemble_total(l, v, {}, 1.4, 0.0);
        for (std::size_t k = 0; k < t1.v_grads[0].size(); ++k)
            CHECK(t2.v_grads[0].data()[k] ==
                  Catch::Approx(2.0 * t1.v_grads[0].data()[k]).margin(1e-15));
        // Matching gradients are untouched by the weights.
        for (std::size_t k = 0; k < t1.l_grads[0].size(); ++k)
            CHECK(t1.l_grads[0].data()[k] == l.grads[0].data()[k]);
    }
}
