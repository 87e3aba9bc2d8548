#pragma once

// Differentiable objectives.  Each op returns its scalar value together with
// analytic gradients with respect to the input matrices, in the order the
// inputs appear in the signature (inputs documented as held fixed, like the
// slack batch in matching_loss, get no gradient entry).  Gradients are with
// respect to the batch-mean-normalized values the ops compute.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvlat/mat.hpp"

namespace mvlat {

struct LossValue {
    double value = 0.0;
    std::vector<Mat> grads;
};

namespace detail {

inline void check_loss_finite(const LossValue& lv, const char* who) {
    if (!std::isfinite(lv.value))
        throw std::runtime_error(std::string(who) + ": non-finite value");
    for (const Mat& g : lv.grads)
        if (!g.all_finite())
            throw std::runtime_error(std::string(who) + ": non-finite gradient");
}

inline void require_same_shape(const Mat& a, const Mat& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

// Subtract the column means (centering over the batch index).
inline Mat center_over_batch(const Mat& y) {
    Mat c = y;
    const std::size_t b = y.rows();
    if (b == 0) return c;
    for (std::size_t j = 0; j < y.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += y(i, j);
        mean /= static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) c(i, j) -= mean;
    }
    return c;
}

} // namespace detail

// (1/b) sum_l { ||u_l - z1_l||^2 + ||u_l - z2_l||^2 }.  The slack batch is a
// constant inside the inner loop, so gradients cover Zhat1, Zhat2 only.
inline LossValue matching_loss(const Mat& u_batch, const Mat& zhat1, const Mat& zhat2) {
    detail::require_same_shape(u_batch, zhat1, "matching_loss");
    detail::require_same_shape(u_batch, zhat2, "matching_loss");
    const std::size_t b = u_batch.rows();
    if (b == 0) throw std::invalid_argument("matching_loss: empty batch");
    const double inv_b = 1.0 / static_cast<double>(b);

    LossValue out;
    out.grads.assign(2, Mat(u_batch.rows(), u_batch.cols()));
    double acc = 0.0;
    for (std::size_t k = 0; k < u_batch.size(); ++k) {
        const double d1 = zhat1.data()[k] - u_batch.data()[k];
        const double d2 = zhat2.data()[k] - u_batch.data()[k];
        acc += d1 * d1 + d2 * d2;
        out.grads[0].data()[k] = 2.0 * inv_b * d1;
        out.grads[1].data()[k] = 2.0 * inv_b * d2;
    }
    out.value = acc * inv_b;
    detail::check_loss_finite(out, "matching_loss");
    return out;
}

// (1/b) sum_l ||x_l - xhat_l||^2; gradient with respect to Xhat.
inline LossValue recon_loss(const Mat& x, const Mat& xhat) {
    detail::require_same_shape(x, xhat, "recon_loss");
    const std::size_t b = x.rows();
    if (b == 0) throw std::invalid_argument("recon_loss: empty batch");
    const double inv_b = 1.0 / static_cast<double>(b);

    LossValue out;
    out.grads.assign(1, Mat(x.rows(), x.cols()));
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = xhat.data()[k] - x.data()[k];
        acc += d * d;
        out.grads[0].data()[k] = 2.0 * inv_b * d;
    }
    out.value = acc * inv_b;
    detail::check_loss_finite(out, "recon_loss");
    return out;
}

// Smoothed absolute Pearson correlation between the two scalar adversary
// output columns, all moments with 1/b normalization.  |x| is smoothed as
// sqrt(x^2 + eps_abs) and each std as sqrt(var + eps_var) so the estimator
// stays differentiable at perfect decorrelation and on degenerate batches.
inline constexpr double kIndepEpsAbs = 1e-8;
inline constexpr double kIndepEpsVar = 1e-8;

inline LossValue indep_reg_batch(const Mat& phi, const Mat& tau) {
    if (phi.cols() != 1 || tau.cols() != 1)
        throw std::invalid_argument("indep_reg_batch: expects b x 1 adversary outputs");
    detail::require_same_shape(phi, tau, "indep_reg_batch");
    const std::size_t b = phi.rows();
    if (b < 2) throw std::invalid_argument("indep_reg_batch: batch size must be >= 2");
    const double inv_b = 1.0 / static_cast<double>(b);

    double pm = 0.0, tm = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        pm += phi(i, 0);
        tm += tau(i, 0);
    }
    pm *= inv_b;
    tm *= inv_b;

    // Two-pass centering: the residual mean of the first-pass deviations is
    // folded back in, so the deviations sum to zero essentially exactly and
    // the shift invariance of the estimator carries over to its gradients
    // even when the eps floors blow the coefficients up.
    std::vector<double> dps(b), dts(b);
    double pr = 0.0, tr = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        dps[i] = phi(i, 0) - pm;
        dts[i] = tau(i, 0) - tm;
        pr += dps[i];
        tr += dts[i];
    }
    pr *= inv_b;
    tr *= inv_b;

    double cov = 0.0, varp = 0.0, vart = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        dps[i] -= pr;
        dts[i] -= tr;
        cov += dps[i] * dts[i];
        varp += dps[i] * dps[i];
        vart += dts[i] * dts[i];
    }
    cov *= inv_b;
    varp *= inv_b;
    vart *= inv_b;

    const double a = std::sqrt(cov * cov + kIndepEpsAbs);
    const double stdp = std::sqrt(varp + kIndepEpsVar);
    const double stdt = std::sqrt(vart + kIndepEpsVar);

    LossValue out;
    out.value = a / (stdp * stdt);
    out.grads.assign(2, Mat(b, 1));
    const double dcov_coeff = cov / (a * stdp * stdt);       // d value / d cov
    const double dvp_coeff = -a / (2.0 * stdp * stdp * stdp * stdt);  // d value / d varp
    const double dvt_coeff = -a / (2.0 * stdp * stdt * stdt * stdt);
    for (std::size_t i = 0; i < b; ++i) {
        out.grads[0](i, 0) = inv_b * (dcov_coeff * dts[i] + dvp_coeff * 2.0 * dps[i]);
        out.grads[1](i, 0) = inv_b * (dcov_coeff * dps[i] + dvt_coeff * 2.0 * dts[i]);
    }
    detail::check_loss_finite(out, "indep_reg_batch");
    return out;
}

// Median pairwise Euclidean distance, the usual neutral kernel width.
inline double median_bandwidth(const Mat& a) {
    const std::size_t b = a.rows();
    if (b < 2) throw std::invalid_argument("median_bandwidth: need at least 2 rows");
    std::vector<double> dists;
    dists.reserve(b * (b - 1) / 2);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                const double d = a(i, k) - a(j, k);
                d2 += d * d;
            }
            dists.push_back(std::sqrt(d2));
        }
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    return std::max(dists[mid], 1e-12);
}

// Biased batch HSIC: trace(K H L H)/(b-1)^2 with Gaussian kernels.
inline LossValue hsic_batch(const Mat& a, const Mat& b_in, double bandwidth_a, double bandwidth_b) {
    const std::size_t b = a.rows();
    if (b_in.rows() != b)
        throw std::invalid_argument("hsic_batch: row counts disagree");
    if (b < 2) throw std::invalid_argument("hsic_batch: batch size must be >= 2");
    if (!(bandwidth_a > 0.0) || !(bandwidth_b > 0.0))
        throw std::invalid_argument("hsic_batch: bandwidths must be positive");

    auto kernel = [&](const Mat& x, double bw) {
        Mat k(b, b);
        const double c = -1.0 / (2.0 * bw * bw);
        for (std::size_t i = 0; i < b; ++i) {
            k(i, i) = 1.0;
            for (std::size_t j = i + 1; j < b; ++j) {
                double d2 = 0.0;
                for (std::size_t t = 0; t < x.cols(); ++t) {
                    const double d = x(i, t) - x(j, t);
                    d2 += d * d;
                }
                k(i, j) = k(j, i) = std::exp(c * d2);
            }
        }
        return k;
    };
    auto double_center = [&](const Mat& m) {
        // H M H with H = I - (1/b) 11^T.
        std::vector<double> row_mean(b, 0.0), col_mean(b, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < b; ++j) {
                row_mean[i] += m(i, j);
                col_mean[j] += m(i, j);
                total += m(i, j);
            }
        Mat c(b, b);
        const double inv_b = 1.0 / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < b; ++j)
                c(i, j) = m(i, j) - row_mean[i] * inv_b - col_mean[j] * inv_b + total * inv_b * inv_b;
        return c;
    };

    const Mat k = kernel(a, bandwidth_a);
    const Mat l = kernel(b_in, bandwidth_b);
    const Mat hlh = double_center(l);  // dependence weights for K's gradient
    const Mat hkh = double_center(k);

    const double denom = static_cast<double>(b - 1) * static_cast<double>(b - 1);
    double tr = 0.0;
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
            tr += k(i, j) * hlh(i, j);

    LossValue out;
    out.value = tr / denom;
    out.grads.assign(2, Mat());
    out.grads[0] = Mat(b, a.cols());
    out.grads[1] = Mat(b, b_in.cols());

    const double ca = -2.0 / (denom * bandwidth_a * bandwidth_a);
    const double cb = -2.0 / (denom * bandwidth_b * bandwidth_b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            const double wa = ca * hlh(i, j) * k(i, j);
            const double wb = cb * hkh(i, j) * l(i, j);
            for (std::size_t t = 0; t < a.cols(); ++t)
                out.grads[0](i, t) += wa * (a(i, t) - a(j, t));
            for (std::size_t t = 0; t < b_in.cols(); ++t)
                out.grads[1](i, t) += wb * (b_in(i, t) - b_in(j, t));
        }
    }
    detail::check_loss_finite(out, "hsic_batch");
    return out;
}

// Barlow Twins redundancy-reduction objective on the batch cross-correlation
// matrix of the two embeddings.
inline LossValue barlow_twins_loss(const Mat& y1, const Mat& y2, double lambda_offdiag) {
    detail::require_same_shape(y1, y2, "barlow_twins_loss");
    const std::size_t b = y1.rows();
    const std::size_t d = y1.cols();
    if (b < 2) throw std::invalid_argument("barlow_twins_loss: batch size must be >= 2");

    const Mat u = detail::center_over_batch(y1);
    const Mat v = detail::center_over_batch(y2);

    std::vector<double> nu(d, 0.0), nv(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double su = 0.0, sv = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            su += u(i, j) * u(i, j);
            sv += v(i, j) * v(i, j);
        }
        nu[j] = std::sqrt(su);
        nv[j] = std::sqrt(sv);
        if (nu[j] == 0.0 || nv[j] == 0.0)
            throw std::invalid_argument("barlow_twins_loss: zero variance in column " + std::to_string(j));
    }

    Mat uhat = u, vhat = v;
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < b; ++i) {
            uhat(i, j) /= nu[j];
            vhat(i, j) /= nv[j];
        }

    const Mat c = matmul_tn(uhat, vhat);  // d x d cross-correlation

    LossValue out;
    double loss = 0.0;
    Mat g(d, d);  // d loss / d C
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) {
                const double r = 1.0 - c(i, i);
                loss += r * r;
                g(i, i) = -2.0 * r;
            } else {
                loss += lambda_offdiag * c(i, j) * c(i, j);
                g(i, j) = 2.0 * lambda_offdiag * c(i, j);
            }
        }
    out.value = loss;

    // d C_ij / d u_col_i = (vhat_j - C_ij uhat_i)/||u_i||, then chain the
    // batch centering (a projection, applied again to the gradient).
    Mat du = matmul_nt(vhat, g);   // column i: sum_j G_ij vhat_j
    Mat dv = matmul(uhat, g);      // column j: sum_i G_ij uhat_i
    std::vector<double> su(d, 0.0), sv(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            su[i] += g(i, j) * c(i, j);
            sv[j] += g(i, j) * c(i, j);
        }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < b; ++i) {
            du(i, j) = (du(i, j) - su[j] * uhat(i, j)) / nu[j];
            dv(i, j) = (dv(i, j) - sv[j] * vhat(i, j)) / nv[j];
        }
    out.grads.assign(2, Mat());
    out.grads[0] = detail::center_over_batch(du);
    out.grads[1] = detail::center_over_batch(dv);
    detail::check_loss_finite(out, "barlow_twins_loss");
    return out;
}

// Slack matching plus a log-sum-exp repulsion among the slack rows; the
// entropy-style alternative to reconstruction.  Gradients cover U, Zhat1,
// Zhat2 (here U is a trainable batch, not a constant).
inline LossValue infonce_slack_loss(const Mat& u_batch, const Mat& zhat1, const Mat& zhat2) {
    detail::require_same_shape(u_batch, zhat1, "infonce_slack_loss");
    detail::require_same_shape(u_batch, zhat2, "infonce_slack_loss");
    const std::size_t k = u_batch.rows();
    const std::size_t d = u_batch.cols();
    if (k < 2) throw std::invalid_argument("infonce_slack_loss: need at least 2 rows");
    const double inv_k = 1.0 / static_cast<double>(k);

    LossValue out;
    out.grads.assign(3, Mat(k, d));
    Mat& gu = out.grads[0];
    Mat& g1 = out.grads[1];
    Mat& g2 = out.grads[2];

    double acc = 0.0;
    for (std::size_t idx = 0; idx < u_batch.size(); ++idx) {
        const double d1 = zhat1.data()[idx] - u_batch.data()[idx];
        const double d2 = zhat2.data()[idx] - u_batch.data()[idx];
        acc += d1 * d1 + d2 * d2;
        g1.data()[idx] = 2.0 * inv_k * d1;
        g2.data()[idx] = 2.0 * inv_k * d2;
        gu.data()[idx] = -2.0 * inv_k * (d1 + d2);
    }

    Mat d2m(k, k);  // pairwise squared distances among slack rows
    for (std::size_t i = 0; i < k; ++i) {
        d2m(i, i) = 0.0;
        for (std::size_t j = i + 1; j < k; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = u_batch(i, t) - u_batch(j, t);
                s += diff * diff;
            }
            d2m(i, j) = d2m(j, i) = s;
        }
    }
    Mat w(k, k);  // softmax over -d^2 per row, max-shifted
    for (std::size_t i = 0; i < k; ++i) {
        double mx = -d2m(i, 0);
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, -d2m(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            w(i, j) = std::exp(-d2m(i, j) - mx);
            denom += w(i, j);
        }
        acc += std::log(denom) + mx;
        for (std::size_t j = 0; j < k; ++j) w(i, j) /= denom;
    }
    out.value = acc * inv_k;

    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            // row i's log-sum-exp pulls u_i toward u_j with weight w_ij and
            // pushes u_j symmetrically.
            const double coef = 2.0 * inv_k * w(i, j);
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = u_batch(i, t) - u_batch(j, t);
                gu(i, t) -= coef * diff;
                gu(j, t) += coef * diff;
            }
        }
    detail::check_loss_finite(out, "infonce_slack_loss");
    return out;
}

// Weighted combination L + beta*V + lambda*sum(R).  The gradient groups stay
// separate because they attach to different places in the network graph:
// theta descends on all three, eta ascends on the R group alone (the trainer
// applies the sign).
struct TotalLoss {
    double value = 0.0;
    std::vector<Mat> l_grads;
    std::vector<Mat> v_grads;  // pre-scaled by beta
    std::vector<Mat> r_grads;  // pre-scaled by lambda, concatenated per term
};

inline TotalLoss assemble_total(const LossValue& l, const LossValue& v,
                                const std::vector<LossValue>& r_terms,
                                double beta, double lambda) {
    TotalLoss out;
    out.value = l.value + beta * v.value;
    out.l_grads = l.grads;
    out.v_grads = v.grads;
    for (Mat& g : out.v_grads) g *= beta;
    for (const LossValue& r : r_terms) {
        out.value += lambda * r.value;
        for (const Mat& g : r.grads) out.r_grads.push_back(g * lambda);
    }
    if (!std::isfinite(out.value))
        throw std::runtime_error("assemble_total: non-finite total");
    return out;
}

} // namespace mvlat
