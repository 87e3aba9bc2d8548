#pragma once

// Alternating optimization: a closed-form SVD update of the slack matrix U
// on full-data encoder outputs, interleaved with stochastic epochs that
// descend theta (encoders + decoders) and ascend eta (adversaries) on the
// minimax objective L + beta*V + lambda*R.  Gradients of L and V come from
// one minibatch, gradients of R from an independently drawn second batch.

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvlat/losses.hpp"
#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/model.hpp"
#include "mvlat/rng.hpp"
#include "mvlat/synth.hpp"

namespace mvlat {

enum class LossVariant { slack_minimax, barlow_twins, infonce_slack };

// Which independence regularizer lambda multiplies: the minimax adversary
// estimator of the main method, or the kernel (HSIC) alternative used in the
// ablation table.
enum class IndepKind { adversarial, hsic };

inline const char* loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::slack_minimax: return "slack_minimax";
        case LossVariant::barlow_twins: return "barlow_twins";
        case LossVariant::infonce_slack: return "infonce_slack";
    }
    return "slack_minimax";
}

inline LossVariant loss_variant_from_name(const std::string& s) {
    if (s == "slack_minimax") return LossVariant::slack_minimax;
    if (s == "barlow_twins") return LossVariant::barlow_twins;
    if (s == "infonce_slack") return LossVariant::infonce_slack;
    throw std::invalid_argument("unknown loss_variant: " + s);
}

inline const char* indep_kind_name(IndepKind k) {
    return k == IndepKind::hsic ? "hsic" : "adversarial";
}

inline IndepKind indep_kind_from_name(const std::string& s) {
    if (s == "adversarial") return IndepKind::adversarial;
    if (s == "hsic") return IndepKind::hsic;
    throw std::invalid_argument("unknown indep_reg: " + s);
}

struct TrainConfig {
    double beta = 1.0;
    double lambda = 0.1;
    std::size_t batch_b1 = 1000;
    std::size_t batch_b2 = 1000;
    double lr_theta = 1e-3;
    double lr_eta = 1e-3;
    double weight_decay_eta = 0.1;
    std::size_t inner_epochs = 10;
    std::size_t max_outer_iters = 200;
    double stop_matching_loss = 0.01;
    bool r_view1 = true;
    bool r_view2 = true;
    LossVariant loss_variant = LossVariant::slack_minimax;
    IndepKind indep = IndepKind::adversarial;
    double barlow_lambda_offdiag = 5e-3;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr_theta > 0.0) || !(lr_eta > 0.0))
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
        if (beta < 0.0 || lambda < 0.0 || weight_decay_eta < 0.0)
            throw std::invalid_argument("TrainConfig: beta, lambda, weight_decay_eta must be >= 0");
        if (batch_b1 < 2 || batch_b2 < 2)
            throw std::invalid_argument("TrainConfig: batch sizes must be >= 2");
        if (stop_matching_loss < 0.0)
            throw std::invalid_argument("TrainConfig: stop_matching_loss must be >= 0");
    }

    // batch_b2 < batch_b1 raises estimator variance for R; allowed but
    // flagged so configs can surface it.
    std::string warning() const {
        if (batch_b2 < batch_b1)
            return "batch_b2 < batch_b1: the independence estimator batch is smaller than the main batch";
        return {};
    }
};

struct SlackMatrix {
    Mat u;  // D x N, rows zero-mean, (1/N) U U^T = I
};

// Largest constraint violation of a slack candidate: feasibility residuals
// for (1/N) U U^T = I and U 1 = 0.
inline double slack_residual(const Mat& u) {
    const std::size_t d = u.rows();
    const std::size_t n = u.cols();
    Mat gram = matmul_nt(u, u);
    gram *= 1.0 / static_cast<double>(n);
    double res = max_abs_diff(gram, Mat::identity(d));
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += u(i, j);
        res = std::max(res, std::abs(s) / static_cast<double>(n));
    }
    return res;
}

// Closed-form slack update: U = sqrt(N) * S * T^T from the SVD of the
// column-centered sum of the two encoder output stacks.  Among all feasible
// U this maximizes trace(U * (F1+F2)^T).
inline SlackMatrix update_slack(const Mat& f1, const Mat& f2) {
    if (!f1.same_shape(f2))
        throw std::invalid_argument("update_slack: encoder stacks have different shapes");
    const std::size_t d = f1.rows();
    const std::size_t n = f1.cols();
    if (n <= d)
        throw std::invalid_argument("update_slack: need N > D, got D = " + std::to_string(d) +
                                    ", N = " + std::to_string(n));
    Mat a = center_columns(f1 + f2);
    const Svd svd = small_svd(a);
    // Negated comparison so an all-zero or NaN spectrum also trips the guard.
    if (!(svd.sigma.back() > 1e-12 * svd.sigma.front()))
        throw std::runtime_error("update_slack: centered encoder outputs are rank deficient "
                                 "(degenerate encoder collapse, sigma_min = " +
                                 std::to_string(svd.sigma.back()) + ")");
    SlackMatrix out;
    out.u = matmul_nt(svd.s, svd.t);
    out.u *= std::sqrt(static_cast<double>(n));
    return out;
}

struct OuterRecord {
    std::size_t outer_iter = 0;
    double matching = 0.0;  // L (variant objective)
    double recon = 0.0;     // V summed over views
    double r1 = 0.0;
    double r2 = 0.0;
    double total = 0.0;     // L + beta V + lambda (masked R sum)
    double seconds = 0.0;   // cumulative wall time since train() start
};

using RunHistory = std::vector<OuterRecord>;

struct TrainResult {
    ModelBundle bundle;
    SlackMatrix slack;
    RunHistory history;
    bool converged = false;
    double final_matching = 0.0;
};

// Optimizer and batching state carried across inner epochs and outer
// iterations (Adam moments deliberately persist across the outer loop).
struct TrainerState {
    AdamState f1, f2, r1, r2;
    AdamState phi1, phi2, tau1, tau2;
    AdamArrayState u_state;  // used only by the infonce_slack variant
    Rng rng;

    TrainerState(const ModelBundle& b, const TrainConfig& cfg, std::size_t slack_size)
        : f1(AdamState::for_net(b.f1, cfg.lr_theta)),
          f2(AdamState::for_net(b.f2, cfg.lr_theta)),
          r1(AdamState::for_net(b.r1, cfg.lr_theta)),
          r2(AdamState::for_net(b.r2, cfg.lr_theta)),
          phi1(AdamState::for_net(b.phi1, cfg.lr_eta, cfg.weight_decay_eta)),
          phi2(AdamState::for_net(b.phi2, cfg.lr_eta, cfg.weight_decay_eta)),
          tau1(AdamState::for_net(b.tau1, cfg.lr_eta, cfg.weight_decay_eta)),
          tau2(AdamState::for_net(b.tau2, cfg.lr_eta, cfg.weight_decay_eta)),
          u_state(AdamArrayState::for_size(slack_size, cfg.lr_theta)),
          rng(Rng::stream(cfg.seed, stream_id::trainer)) {}
};

namespace detail {

// Gather slack columns for a batch as a (b x D) matrix of u_l rows.
inline Mat gather_slack(const Mat& u, const std::vector<std::size_t>& idx) {
    Mat out(idx.size(), u.rows());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t r = 0; r < u.rows(); ++r)
            out(i, r) = u(r, idx[i]);
    return out;
}

// Full-data encoder shared outputs stacked as D x N, the F^(q) of the slack
// update.
inline Mat encoder_stack(const Mlp& encoder, const Mat& x, std::size_t d_shared) {
    const EncodeSplitResult es = encode_split(encoder, x, d_shared);
    return transpose(es.zhat);
}

struct ViewBatchPack {
    ForwardTrace enc;
    Mat zhat, chat;
};

inline ViewBatchPack encode_batch(const Mlp& encoder, const Mat& xb, std::size_t d) {
    ViewBatchPack p;
    p.enc = forward(encoder, xb);
    p.zhat = slice_cols(p.enc.output(), 0, d);
    p.chat = slice_cols(p.enc.output(), d, p.enc.output().cols());
    return p;
}

// Embed a gradient on (zhat | chat) back into encoder-output coordinates.
inline Mat join_head_grads(const Mat& gz, const Mat& gc) { return hcat(gz, gc); }

// Value-only InfoNCE objective over all rows, O(N) memory.
inline double infonce_value(const Mat& u, const Mat& z1, const Mat& z2) {
    const std::size_t k = u.rows();
    const std::size_t d = u.cols();
    double acc = 0.0;
    for (std::size_t idx = 0; idx < u.size(); ++idx) {
        const double d1 = z1.data()[idx] - u.data()[idx];
        const double d2 = z2.data()[idx] - u.data()[idx];
        acc += d1 * d1 + d2 * d2;
    }
    for (std::size_t i = 0; i < k; ++i) {
        double mx = 0.0;  // -d^2 attains 0 at j == i
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = u(i, t) - u(j, t);
                s += diff * diff;
            }
            denom += std::exp(-s - mx);
        }
        acc += std::log(denom) + mx;
    }
    return acc / static_cast<double>(k);
}

} // namespace detail

// One pass over the data in batch_b1-sized minibatches.  For each step the
// L and V gradients are estimated on the shuffled batch B1 and the R
// gradients on an independently drawn batch B2; theta descends on
// dL + beta dV + lambda dR, eta descends on -lambda dR (ascent) plus weight
// decay.
inline void inner_epoch(ModelBundle& bundle, const Dataset& ds, Mat& u,
                        const TrainConfig& cfg, TrainerState& st) {
    const std::size_t n = ds.x1.rows();
    const std::size_t d = bundle.dims.d;
    const std::size_t b1 = std::min(cfg.batch_b1, n);
    const std::size_t b2 = std::min(cfg.batch_b2, n);
    if (b1 < 2) throw std::invalid_argument("inner_epoch: effective batch below 2");

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    st.rng.shuffle(perm);
    const std::size_t steps = std::max<std::size_t>(1, n / b1);

    for (std::size_t s = 0; s < steps; ++s) {
        try {
            const std::vector<std::size_t> idx1(perm.begin() + s * b1, perm.begin() + (s + 1) * b1);
            const Mat x1b = take_rows(ds.x1, idx1);
            const Mat x2b = take_rows(ds.x2, idx1);

            detail::ViewBatchPack v1 = detail::encode_batch(bundle.f1, x1b, d);
            detail::ViewBatchPack v2 = detail::encode_batch(bundle.f2, x2b, d);

            // ---- L on B1 ------------------------------------------------
            Mat gz1, gz2;             // d L / d zhat_q
            Mat gu_batch;             // d L / d u_l (infonce only)
            switch (cfg.loss_variant) {
                case LossVariant::slack_minimax: {
                    const Mat ub = detail::gather_slack(u, idx1);
                    LossValue l = matching_loss(ub, v1.zhat, v2.zhat);
                    gz1 = std::move(l.grads[0]);
                    gz2 = std::move(l.grads[1]);
                    break;
                }
                case LossVariant::barlow_twins: {
                    LossValue l = barlow_twins_loss(v1.zhat, v2.zhat, cfg.barlow_lambda_offdiag);
                    gz1 = std::move(l.grads[0]);
                    gz2 = std::move(l.grads[1]);
                    break;
                }
                case LossVariant::infonce_slack: {
                    const Mat ub = detail::gather_slack(u, idx1);
                    LossValue l = infonce_slack_loss(ub, v1.zhat, v2.zhat);
                    gu_batch = std::move(l.grads[0]);
                    gz1 = std::move(l.grads[1]);
                    gz2 = std::move(l.grads[2]);
                    break;
                }
            }

            // ---- V on B1 (decoder path), skipped entirely at beta = 0 ---
            Mat gy1 = detail::join_head_grads(gz1, Mat(b1, bundle.dims.d1));
            Mat gy2 = detail::join_head_grads(gz2, Mat(b1, bundle.dims.d2));
            MlpGrads r1_grads, r2_grads;
            bool have_decoder_grads = false;
            if (cfg.beta > 0.0) {
                ForwardTrace dec1 = forward(bundle.r1, v1.enc.output());
                ForwardTrace dec2 = forward(bundle.r2, v2.enc.output());
                LossValue rec1 = recon_loss(x1b, dec1.output());
                LossValue rec2 = recon_loss(x2b, dec2.output());
                rec1.grads[0] *= cfg.beta;
                rec2.grads[0] *= cfg.beta;
                BackwardResult br1 = backward(bundle.r1, dec1, rec1.grads[0]);
                BackwardResult br2 = backward(bundle.r2, dec2, rec2.grads[0]);
                gy1 += br1.grad_x;
                gy2 += br2.grad_x;
                r1_grads = std::move(br1.grads);
                r2_grads = std::move(br2.grads);
                have_decoder_grads = true;
            }

            BackwardResult bf1 = backward(bundle.f1, v1.enc, gy1);
            BackwardResult bf2 = backward(bundle.f2, v2.enc, gy2);

            // ---- R on an independent B2 ---------------------------------
            MlpGrads phi1_grads, tau1_grads, phi2_grads, tau2_grads;
            bool have_eta_grads = false;
            if (cfg.lambda > 0.0 && (cfg.r_view1 || cfg.r_view2)) {
                const std::vector<std::size_t> idx2 = st.rng.sample_without_replacement(n, b2);
                auto r_term = [&](const Mlp& enc, const Mlp& phi, const Mlp& tau, const Mat& x,
                                  MlpGrads& enc_acc, MlpGrads* phi_out, MlpGrads* tau_out) {
                    const Mat xb = take_rows(x, idx2);
                    detail::ViewBatchPack vb = detail::encode_batch(enc, xb, d);
                    Mat gyb;
                    if (cfg.indep == IndepKind::adversarial) {
                        ForwardTrace tphi = forward(phi, vb.zhat);
                        ForwardTrace ttau = forward(tau, vb.chat);
                        LossValue r = indep_reg_batch(tphi.output(), ttau.output());
                        r.grads[0] *= cfg.lambda;
                        r.grads[1] *= cfg.lambda;
                        BackwardResult bphi = backward(phi, tphi, r.grads[0]);
                        BackwardResult btau = backward(tau, ttau, r.grads[1]);
                        gyb = detail::join_head_grads(bphi.grad_x, btau.grad_x);
                        *phi_out = std::move(bphi.grads);
                        *tau_out = std::move(btau.grads);
                    } else {
                        LossValue r = hsic_batch(vb.zhat, vb.chat,
                                                 median_bandwidth(vb.zhat), median_bandwidth(vb.chat));
                        r.grads[0] *= cfg.lambda;
                        r.grads[1] *= cfg.lambda;
                        gyb = detail::join_head_grads(r.grads[0], r.grads[1]);
                    }
                    BackwardResult be = backward(enc, vb.enc, gyb);
                    enc_acc.accumulate(be.grads);
                };
                if (cfg.r_view1)
                    r_term(bundle.f1, bundle.phi1, bundle.tau1, ds.x1, bf1.grads, &phi1_grads, &tau1_grads);
                if (cfg.r_view2)
                    r_term(bundle.f2, bundle.phi2, bundle.tau2, ds.x2, bf2.grads, &phi2_grads, &tau2_grads);
                have_eta_grads = (cfg.indep == IndepKind::adversarial);
            }

            // ---- parameter updates --------------------------------------
            adam_step(bundle.f1, bf1.grads, st.f1);
            adam_step(bundle.f2, bf2.grads, st.f2);
            if (have_decoder_grads) {
                adam_step(bundle.r1, r1_grads, st.r1);
                adam_step(bundle.r2, r2_grads, st.r2);
            }
            if (have_eta_grads) {
                if (cfg.r_view1) {
                    adam_step(bundle.phi1, phi1_grads.scale(-1.0), st.phi1);
                    adam_step(bundle.tau1, tau1_grads.scale(-1.0), st.tau1);
                }
                if (cfg.r_view2) {
                    adam_step(bundle.phi2, phi2_grads.scale(-1.0), st.phi2);
                    adam_step(bundle.tau2, tau2_grads.scale(-1.0), st.tau2);
                }
            }
            if (cfg.loss_variant == LossVariant::infonce_slack) {
                // Sparse Adam over the touched slack columns; moments live
                // in a flat D x N array indexed like U's storage.
                ++st.u_state.t;
                const double bc1 = 1.0 - std::pow(st.u_state.beta1, static_cast<double>(st.u_state.t));
                const double bc2 = 1.0 - std::pow(st.u_state.beta2, static_cast<double>(st.u_state.t));
                for (std::size_t i = 0; i < idx1.size(); ++i)
                    for (std::size_t r = 0; r < u.rows(); ++r) {
                        const std::size_t flat = r * u.cols() + idx1[i];
                        const double g = gu_batch(i, r);
                        double& m = st.u_state.m[flat];
                        double& v = st.u_state.v[flat];
                        m = st.u_state.beta1 * m + (1.0 - st.u_state.beta1) * g;
                        v = st.u_state.beta2 * v + (1.0 - st.u_state.beta2) * g * g;
                        u.data()[flat] -= st.u_state.lr * (m / bc1) / (std::sqrt(v / bc2) + st.u_state.eps);
                    }
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("inner_epoch: step " + std::to_string(s) + ": " + e.what());
        }
    }
}

struct FullMetrics {
    double matching = 0.0;
    double recon = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double total = 0.0;
};

// Objective terms evaluated on the full dataset with the current parameters.
// Kernel HSIC is quadratic in N, so its diagnostic value is computed on a
// leading slice of at most batch_b2 rows.
inline FullMetrics evaluate_metrics(const ModelBundle& bundle, const Dataset& ds, const Mat& u,
                                    const TrainConfig& cfg) {
    FullMetrics m;
    const std::size_t d = bundle.dims.d;
    const EncodeSplitResult e1 = encode_split(bundle.f1, ds.x1, d);
    const EncodeSplitResult e2 = encode_split(bundle.f2, ds.x2, d);

    switch (cfg.loss_variant) {
        case LossVariant::slack_minimax: {
            Mat ub = transpose(u);
            double acc = 0.0;
            for (std::size_t k = 0; k < ub.size(); ++k) {
                const double d1 = e1.zhat.data()[k] - ub.data()[k];
                const double d2 = e2.zhat.data()[k] - ub.data()[k];
                acc += d1 * d1 + d2 * d2;
            }
            m.matching = acc / static_cast<double>(ub.rows());
            break;
        }
        case LossVariant::barlow_twins:
            m.matching = barlow_twins_loss(e1.zhat, e2.zhat, cfg.barlow_lambda_offdiag).value;
            break;
        case LossVariant::infonce_slack:
            m.matching = detail::infonce_value(transpose(u), e1.zhat, e2.zhat);
            break;
    }

    m.recon = recon_loss(ds.x1, decode(bundle.r1, e1.zhat, e1.chat)).value +
              recon_loss(ds.x2, decode(bundle.r2, e2.zhat, e2.chat)).value;

    auto r_value = [&](const Mlp& phi, const Mlp& tau, const EncodeSplitResult& es) {
        if (cfg.indep == IndepKind::adversarial)
            return indep_reg_batch(apply(phi, es.zhat), apply(tau, es.chat)).value;
        const std::size_t cap = std::min(es.zhat.rows(), cfg.batch_b2);
        std::vector<std::size_t> head(cap);
        for (std::size_t i = 0; i < cap; ++i) head[i] = i;
        const Mat zh = take_rows(es.zhat, head);
        const Mat ch = take_rows(es.chat, head);
        return hsic_batch(zh, ch, median_bandwidth(zh), median_bandwidth(ch)).value;
    };
    m.r1 = r_value(bundle.phi1, bundle.tau1, e1);
    m.r2 = r_value(bundle.phi2, bundle.tau2, e2);

    m.total = m.matching + cfg.beta * m.recon +
              cfg.lambda * ((cfg.r_view1 ? m.r1 : 0.0) + (cfg.r_view2 ? m.r2 : 0.0));
    return m;
}

// Full training loop.  Every outer iteration runs cfg.inner_epochs epochs,
// records full-data metrics, stops once the variant objective falls below
// stop_matching_loss, and (for the slack variant) refreshes U by SVD before
// the next iteration.  The Barlow Twins and InfoNCE variants keep the
// initial slack (Barlow ignores it, InfoNCE trains it by gradient).
inline TrainResult train(const ModelBundle& bundle_in, const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    bundle_in.validate();
    if (ds.x1.cols() != bundle_in.dims.m1 || ds.x2.cols() != bundle_in.dims.m2)
        throw std::invalid_argument("train: dataset view dims do not match bundle dims");
    if (ds.x1.rows() != ds.x2.rows() || ds.x1.rows() == 0)
        throw std::invalid_argument("train: bad dataset row counts");
    const std::size_t n = ds.x1.rows();
    const std::size_t d = bundle_in.dims.d;

    TrainResult res;
    res.bundle = bundle_in;
    TrainerState st(res.bundle, cfg, d * n);

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto full_slack = [&] {
        return update_slack(detail::encoder_stack(res.bundle.f1, ds.x1, d),
                            detail::encoder_stack(res.bundle.f2, ds.x2, d));
    };

    res.slack = full_slack();
    for (std::size_t outer = 1; outer <= cfg.max_outer_iters; ++outer) {
        for (std::size_t e = 0; e < cfg.inner_epochs; ++e)
            inner_epoch(res.bundle, ds, res.slack.u, cfg, st);

        const FullMetrics fm = evaluate_metrics(res.bundle, ds, res.slack.u, cfg);
        OuterRecord rec;
        rec.outer_iter = outer;
        rec.matching = fm.matching;
        rec.recon = fm.recon;
        rec.r1 = fm.r1;
        rec.r2 = fm.r2;
        rec.total = fm.total;
        rec.seconds = elapsed();
        res.history.push_back(rec);
        res.final_matching = fm.matching;

        if (fm.matching <= cfg.stop_matching_loss) {
            res.converged = true;
            break;
        }
        if (cfg.loss_variant == LossVariant::slack_minimax)
            res.slack = full_slack();
    }
    return res;
}

// Trains fresh adversaries against frozen embeddings by eta-only ascent and
// reports the independence value they achieve on the full data.  This is the
// Post-hoc dependence probe: high achievable correlation means dependence was left
// in the embeddings.
inline double adversary_probe(const Mat& zhat, const Mat& chat, std::size_t epochs,
                              std::size_t batch, double lr, double decay,
                              std::uint64_t seed, std::size_t adv_width = 128) {
    if (zhat.rows() != chat.rows())
        throw std::invalid_argument("adversary_probe: row counts disagree");
    const std::size_t n = zhat.rows();
    if (n < 2) throw std::invalid_argument("adversary_probe: need at least 2 rows");
    const std::size_t b = std::min(batch, n);

    Mlp phi = make_mlp(zhat.cols(), adv_width, 2, 1, Activation::relu);
    Mlp tau = make_mlp(chat.cols(), adv_width, 2, 1, Activation::relu);
    Rng init_rng = Rng::stream(seed, stream_id::model_init);
    init_params(phi, init_rng);
    init_params(tau, init_rng);
    AdamState st_phi = AdamState::for_net(phi, lr, decay);
    AdamState st_tau = AdamState::for_net(tau, lr, decay);

    Rng rng = Rng::stream(seed, stream_id::trainer);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(perm);
        const std::size_t steps = std::max<std::size_t>(1, n / b);
        for (std::size_t s = 0; s < steps; ++s) {
            const std::vector<std::size_t> idx(perm.begin() + s * b, perm.begin() + (s + 1) * b);
            ForwardTrace tphi = forward(phi, take_rows(zhat, idx));
            ForwardTrace ttau = forward(tau, take_rows(chat, idx));
            LossValue r = indep_reg_batch(tphi.output(), ttau.output());
            BackwardResult bphi = backward(phi, tphi, r.grads[0]);
            BackwardResult btau = backward(tau, ttau, r.grads[1]);
            adam_step(phi, bphi.grads.scale(-1.0), st_phi);
            adam_step(tau, btau.grads.scale(-1.0), st_tau);
        }
    }
    return indep_reg_batch(apply(phi, zhat), apply(tau, chat)).value;
}

} // namespace mvlat
