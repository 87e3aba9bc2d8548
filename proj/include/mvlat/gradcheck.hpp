#pragma once

// Central finite-difference verification of every analytic gradient in the
// losses module, both directly on matrix inputs and chained through
// networks (encoder heads, decoders, adversaries) the way the trainer wires
// them.  Checks through relu networks use a two-step consistency filter to
// discard parameters whose difference window straddles a kink, where the
// finite-difference oracle itself is invalid.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mvlat/losses.hpp"
#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/model.hpp"
#include "mvlat/rng.hpp"

namespace mvlat {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    bool pass = true;
};

namespace gradcheck_detail {

struct FdProbe {
    double value = 0.0;
    bool valid = true;
};

// Central difference of f under perturbation of *p.  With two_step set the
// estimate is recomputed at half the step and compared against the one-sided
// slopes through f(p); disagreement beyond the noise scale marks the probe
// invalid (the window straddles a non-smooth point).  The one-sided check
// matters because a kink exactly at p biases the central estimate by the
// same amount at every step size.
template <typename Fn>
FdProbe fd_central(double* p, double h, bool two_step, Fn&& f, double f0,
                   double noise_scale = 1e-7) {
    const double orig = *p;
    *p = orig + h;
    const double fp = f();
    *p = orig - h;
    const double fm = f();
    *p = orig;
    FdProbe out;
    out.value = (fp - fm) / (2.0 * h);
    if (two_step) {
        *p = orig + 0.5 * h;
        const double fp2 = f();
        *p = orig - 0.5 * h;
        const double fm2 = f();
        *p = orig;
        const double half = (fp2 - fm2) / h;
        const double fwd = (fp - f0) / h;
        const double bwd = (f0 - fm) / h;
        const double scale = std::max({std::abs(out.value), std::abs(half), noise_scale});
        if (std::abs(out.value - half) > 0.02 * scale || std::abs(fwd - bwd) > 0.05 * scale)
            out.valid = false;
    }
    return out;
}

// The step is widened and an absolute floor added in proportion to the
// objective's magnitude: a central difference of f carries roundoff of order
// eps*|f|/h no matter how smooth f is, so comparisons against gradients much
// smaller than that would only measure noise.
template <typename Fn>
void update_result(GradCheckResult& res, double* p, double analytic, double h, bool two_step,
                   double tol, double f0, Fn&& f) {
    const double h_eff = h * std::max(1.0, std::cbrt(std::abs(f0)));
    const double atol =
        50.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / h_eff;
    const auto probe = fd_central(p, h_eff, two_step, f, f0, atol / tol);
    if (!probe.valid) {
        ++res.skipped;
        return;
    }
    ++res.checked;
    const double diff = std::abs(analytic - probe.value);
    const double denom = std::max(std::abs(analytic), std::abs(probe.value)) + atol / tol;
    const double e = diff / denom;
    res.max_rel_err = std::max(res.max_rel_err, e);
    if (e > tol) res.pass = false;
}

} // namespace gradcheck_detail

// Compare analytic gradients with respect to entries of the given matrices
// against central finite differences of value_fn.
inline GradCheckResult check_matrix_grads(const std::string& name, std::vector<Mat*> inputs,
                                          const std::function<double()>& value_fn,
                                          const std::vector<Mat>& analytic,
                                          double h = 1e-5, double tol = 1e-4,
                                          bool two_step = false) {
    GradCheckResult res;
    res.name = name;
    if (analytic.size() != inputs.size())
        throw std::invalid_argument("check_matrix_grads: gradient count mismatch");
    const double f0 = value_fn();
    for (std::size_t m = 0; m < inputs.size(); ++m) {
        if (!inputs[m]->same_shape(analytic[m]))
            throw std::invalid_argument("check_matrix_grads: gradient shape mismatch for input " +
                                        std::to_string(m));
        for (std::size_t k = 0; k < inputs[m]->size(); ++k)
            gradcheck_detail::update_result(res, inputs[m]->data() + k, analytic[m].data()[k], h,
                                            two_step, tol, f0, value_fn);
    }
    return res;
}

// Same, over every weight and bias of the given networks.
inline GradCheckResult check_net_grads(const std::string& name, std::vector<Mlp*> nets,
                                       const std::function<double()>& value_fn,
                                       const std::vector<MlpGrads>& analytic,
                                       double h = 1e-5, double tol = 1e-4,
                                       bool two_step = false) {
    GradCheckResult res;
    res.name = name;
    if (analytic.size() != nets.size())
        throw std::invalid_argument("check_net_grads: gradient count mismatch");
    const double f0 = value_fn();
    for (std::size_t m = 0; m < nets.size(); ++m) {
        Mlp& net = *nets[m];
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            Layer& layer = net.layers[l];
            for (std::size_t k = 0; k < layer.w.size(); ++k)
                gradcheck_detail::update_result(res, layer.w.data() + k, analytic[m].w[l].data()[k],
                                                h, two_step, tol, f0, value_fn);
            for (std::size_t k = 0; k < layer.b.size(); ++k)
                gradcheck_detail::update_result(res, &layer.b[k], analytic[m].b[l][k], h, two_step,
                                                tol, f0, value_fn);
        }
    }
    return res;
}

namespace gradcheck_detail {

inline Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = scale * rng.normal();
    return m;
}

// Small-parameter init used by the chain checks (matches the invariant's
// N(0, 0.1^2) sampling).
inline void init_small(Mlp& net, Rng& rng) {
    for (auto& l : net.layers) {
        for (std::size_t k = 0; k < l.w.size(); ++k) l.w.data()[k] = rng.normal(0.0, 0.1);
        for (auto& v : l.b) v = rng.normal(0.0, 0.1);
    }
}

struct ChainFixture {
    Mlp f1, f2, r1, phi, tau;
    Mat x1, x2, u;
    std::size_t d = 2;

    static ChainFixture make(Activation act, std::uint64_t seed) {
        ChainFixture fx;
        Rng rng = Rng::stream(seed, 77);
        const std::size_t m_dim = 4, width = 6, dq = 2, b = 8;
        fx.f1 = make_mlp(m_dim, width, 2, fx.d + dq, act);
        fx.f2 = make_mlp(m_dim, width, 2, fx.d + dq, act);
        fx.r1 = make_mlp(fx.d + dq, width, 2, m_dim, act);
        fx.phi = make_mlp(fx.d, width, 2, 1, act);
        fx.tau = make_mlp(dq, width, 2, 1, act);
        init_small(fx.f1, rng);
        init_small(fx.f2, rng);
        init_small(fx.r1, rng);
        init_small(fx.phi, rng);
        init_small(fx.tau, rng);
        fx.x1 = random_mat(b, m_dim, rng);
        fx.x2 = random_mat(b, m_dim, rng);
        fx.u = random_mat(b, fx.d, rng);
        return fx;
    }

    EncodeSplitResult enc1() const { return encode_split(f1, x1, d); }
    EncodeSplitResult enc2() const { return encode_split(f2, x2, d); }
};

} // namespace gradcheck_detail

// The full suite: direct matrix-level checks for every loss op, then chain
// checks through smooth (softplus) networks covering the exact gradient
// assembly the trainer performs, and finally a relu-network chain with the
// kink filter active.
inline std::vector<GradCheckResult> run_gradient_suite(double tol = 1e-4) {
    using namespace gradcheck_detail;
    std::vector<GradCheckResult> results;
    const double h = 1e-5;
    Rng rng = Rng::stream(20240811, 1);

    // ---- direct matrix-level checks ------------------------------------
    {
        Mat u = random_mat(8, 3, rng), z1 = random_mat(8, 3, rng), z2 = random_mat(8, 3, rng);
        auto value = [&] { return matching_loss(u, z1, z2).value; };
        LossValue lv = matching_loss(u, z1, z2);
        results.push_back(check_matrix_grads("matching_loss", {&z1, &z2}, value, lv.grads, h, tol));
    }
    {
        Mat x = random_mat(8, 4, rng), xh = random_mat(8, 4, rng);
        auto value = [&] { return recon_loss(x, xh).value; };
        LossValue lv = recon_loss(x, xh);
        results.push_back(check_matrix_grads("recon_loss", {&xh}, value, lv.grads, h, tol));
    }
    {
        Mat phi = random_mat(16, 1, rng), tau = random_mat(16, 1, rng);
        // add some genuine correlation so the check probes a non-trivial point
        for (std::size_t i = 0; i < 16; ++i) tau(i, 0) += 0.5 * phi(i, 0);
        auto value = [&] { return indep_reg_batch(phi, tau).value; };
        LossValue lv = indep_reg_batch(phi, tau);
        results.push_back(check_matrix_grads("indep_reg_batch", {&phi, &tau}, value, lv.grads, h, tol));
    }
    {
        Mat a = random_mat(10, 2, rng), b = random_mat(10, 3, rng);
        const double bwa = 1.3, bwb = 0.9;
        auto value = [&] { return hsic_batch(a, b, bwa, bwb).value; };
        LossValue lv = hsic_batch(a, b, bwa, bwb);
        results.push_back(check_matrix_grads("hsic_batch", {&a, &b}, value, lv.grads, h, tol));
    }
    {
        Mat y1 = random_mat(12, 3, rng), y2 = random_mat(12, 3, rng);
        auto value = [&] { return barlow_twins_loss(y1, y2, 0.05).value; };
        LossValue lv = barlow_twins_loss(y1, y2, 0.05);
        results.push_back(check_matrix_grads("barlow_twins_loss", {&y1, &y2}, value, lv.grads, h, tol));
    }
    {
        Mat u = random_mat(8, 3, rng), z1 = random_mat(8, 3, rng), z2 = random_mat(8, 3, rng);
        auto value = [&] { return infonce_slack_loss(u, z1, z2).value; };
        LossValue lv = infonce_slack_loss(u, z1, z2);
        results.push_back(
            check_matrix_grads("infonce_slack_loss", {&u, &z1, &z2}, value, lv.grads, h, tol));
    }

    // ---- chains through smooth networks --------------------------------
    auto chain_checks = [&](Activation act, const std::string& suffix, bool two_step) {
        ChainFixture fx = ChainFixture::make(act, 42);

        {  // matching through both shared heads
            auto value = [&] { return matching_loss(fx.u, fx.enc1().zhat, fx.enc2().zhat).value; };
            ForwardTrace t1 = forward(fx.f1, fx.x1);
            ForwardTrace t2 = forward(fx.f2, fx.x2);
            LossValue lv = matching_loss(fx.u, slice_cols(t1.output(), 0, fx.d),
                                         slice_cols(t2.output(), 0, fx.d));
            const std::size_t dq = t1.output().cols() - fx.d;
            Mat gy1 = hcat(lv.grads[0], Mat(fx.x1.rows(), dq));
            Mat gy2 = hcat(lv.grads[1], Mat(fx.x2.rows(), dq));
            std::vector<MlpGrads> grads;
            grads.push_back(backward(fx.f1, t1, gy1).grads);
            grads.push_back(backward(fx.f2, t2, gy2).grads);
            results.push_back(check_net_grads("matching_chain" + suffix, {&fx.f1, &fx.f2}, value,
                                              grads, h, tol, two_step));
        }
        {  // reconstruction through decoder-of-encoder
            auto value = [&] {
                const Mat y = apply(fx.f1, fx.x1);
                return recon_loss(fx.x1, apply(fx.r1, y)).value;
            };
            ForwardTrace te = forward(fx.f1, fx.x1);
            ForwardTrace td = forward(fx.r1, te.output());
            LossValue lv = recon_loss(fx.x1, td.output());
            BackwardResult bd = backward(fx.r1, td, lv.grads[0]);
            BackwardResult be = backward(fx.f1, te, bd.grad_x);
            results.push_back(check_net_grads("recon_chain" + suffix, {&fx.f1, &fx.r1}, value,
                                              {be.grads, bd.grads}, h, tol, two_step));
        }
        {  // independence estimator chained into theta and eta sides
            auto value = [&] {
                const EncodeSplitResult es = fx.enc1();
                return indep_reg_batch(apply(fx.phi, es.zhat), apply(fx.tau, es.chat)).value;
            };
            ForwardTrace te = forward(fx.f1, fx.x1);
            const Mat zh = slice_cols(te.output(), 0, fx.d);
            const Mat ch = slice_cols(te.output(), fx.d, te.output().cols());
            ForwardTrace tp = forward(fx.phi, zh);
            ForwardTrace tt = forward(fx.tau, ch);
            LossValue lv = indep_reg_batch(tp.output(), tt.output());
            BackwardResult bp = backward(fx.phi, tp, lv.grads[0]);
            BackwardResult bt = backward(fx.tau, tt, lv.grads[1]);
            BackwardResult be = backward(fx.f1, te, hcat(bp.grad_x, bt.grad_x));
            results.push_back(check_net_grads("indep_chain_theta" + suffix, {&fx.f1}, value,
                                              {be.grads}, h, tol, two_step));
            results.push_back(check_net_grads("indep_chain_eta" + suffix, {&fx.phi, &fx.tau}, value,
                                              {bp.grads, bt.grads}, h, tol, two_step));
        }
        {  // HSIC chained through the encoder heads (fixed bandwidths)
            const EncodeSplitResult es0 = fx.enc1();
            const double bwz = median_bandwidth(es0.zhat);
            const double bwc = median_bandwidth(es0.chat);
            auto value = [&] {
                const EncodeSplitResult es = fx.enc1();
                return hsic_batch(es.zhat, es.chat, bwz, bwc).value;
            };
            ForwardTrace te = forward(fx.f1, fx.x1);
            const Mat zh = slice_cols(te.output(), 0, fx.d);
            const Mat ch = slice_cols(te.output(), fx.d, te.output().cols());
            LossValue lv = hsic_batch(zh, ch, bwz, bwc);
            BackwardResult be = backward(fx.f1, te, hcat(lv.grads[0], lv.grads[1]));
            results.push_back(
                check_net_grads("hsic_chain" + suffix, {&fx.f1}, value, {be.grads}, h, tol, two_step));
        }
        {  // Barlow Twins through both shared heads
            auto value = [&] {
                return barlow_twins_loss(fx.enc1().zhat, fx.enc2().zhat, 0.05).value;
            };
            ForwardTrace t1 = forward(fx.f1, fx.x1);
            ForwardTrace t2 = forward(fx.f2, fx.x2);
            LossValue lv = barlow_twins_loss(slice_cols(t1.output(), 0, fx.d),
                                             slice_cols(t2.output(), 0, fx.d), 0.05);
            const std::size_t dq = t1.output().cols() - fx.d;
            Mat gy1 = hcat(lv.grads[0], Mat(fx.x1.rows(), dq));
            Mat gy2 = hcat(lv.grads[1], Mat(fx.x2.rows(), dq));
            std::vector<MlpGrads> grads;
            grads.push_back(backward(fx.f1, t1, gy1).grads);
            grads.push_back(backward(fx.f2, t2, gy2).grads);
            results.push_back(check_net_grads("barlow_chain" + suffix, {&fx.f1, &fx.f2}, value,
                                              grads, h, tol, two_step));
        }
        {  // InfoNCE with a trainable slack batch plus both encoders
            auto value = [&] {
                return infonce_slack_loss(fx.u, fx.enc1().zhat, fx.enc2().zhat).value;
            };
            ForwardTrace t1 = forward(fx.f1, fx.x1);
            ForwardTrace t2 = forward(fx.f2, fx.x2);
            LossValue lv = infonce_slack_loss(fx.u, slice_cols(t1.output(), 0, fx.d),
                                              slice_cols(t2.output(), 0, fx.d));
            const std::size_t dq = t1.output().cols() - fx.d;
            Mat gy1 = hcat(lv.grads[1], Mat(fx.x1.rows(), dq));
            Mat gy2 = hcat(lv.grads[2], Mat(fx.x2.rows(), dq));
            std::vector<MlpGrads> grads;
            grads.push_back(backward(fx.f1, t1, gy1).grads);
            grads.push_back(backward(fx.f2, t2, gy2).grads);
            results.push_back(check_matrix_grads("infonce_chain_u" + suffix, {&fx.u}, value,
                                                 {lv.grads[0]}, h, tol, two_step));
            results.push_back(check_net_grads("infonce_chain_enc" + suffix, {&fx.f1, &fx.f2}, value,
                                              grads, h, tol, two_step));
        }
        {  // assembled total objective, theta side, trainer wiring
            const double beta = 0.7, lambda = 0.3;
            auto value = [&] {
                const EncodeSplitResult e1 = fx.enc1();
                const EncodeSplitResult e2 = fx.enc2();
                const double l = matching_loss(fx.u, e1.zhat, e2.zhat).value;
                const double v = recon_loss(fx.x1, decode(fx.r1, e1.zhat, e1.chat)).value;
                const double r = indep_reg_batch(apply(fx.phi, e1.zhat), apply(fx.tau, e1.chat)).value;
                return l + beta * v + lambda * r;
            };
            ForwardTrace t1 = forward(fx.f1, fx.x1);
            ForwardTrace t2 = forward(fx.f2, fx.x2);
            const Mat z1 = slice_cols(t1.output(), 0, fx.d);
            const Mat c1 = slice_cols(t1.output(), fx.d, t1.output().cols());
            const Mat z2 = slice_cols(t2.output(), 0, fx.d);
            const std::size_t dq = t1.output().cols() - fx.d;

            LossValue lm = matching_loss(fx.u, z1, z2);
            ForwardTrace td = forward(fx.r1, t1.output());
            LossValue lr = recon_loss(fx.x1, td.output());
            ForwardTrace tp = forward(fx.phi, z1);
            ForwardTrace tt = forward(fx.tau, c1);
            LossValue li = indep_reg_batch(tp.output(), tt.output());
            const TotalLoss total = assemble_total(lm, lr, {li}, beta, lambda);

            BackwardResult bd = backward(fx.r1, td, total.v_grads[0]);
            BackwardResult bp = backward(fx.phi, tp, total.r_grads[0]);
            BackwardResult bt = backward(fx.tau, tt, total.r_grads[1]);
            Mat gy1 = hcat(total.l_grads[0], Mat(fx.x1.rows(), dq));
            gy1 += bd.grad_x;
            gy1 += hcat(bp.grad_x, bt.grad_x);
            Mat gy2 = hcat(total.l_grads[1], Mat(fx.x2.rows(), dq));
            std::vector<MlpGrads> grads;
            grads.push_back(backward(fx.f1, t1, gy1).grads);
            grads.push_back(backward(fx.f2, t2, gy2).grads);
            results.push_back(check_net_grads("total_chain" + suffix, {&fx.f1, &fx.f2}, value, grads,
                                              h, tol, two_step));
        }
    };

    chain_checks(Activation::softplus, "", false);
    chain_checks(Activation::tanh_act, "_tanh", false);
    chain_checks(Activation::relu, "_relu", true);

    return results;
}

} // namespace mvlat
