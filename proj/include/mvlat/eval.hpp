#pragma once

// Evaluation of trained bundles: KDE-based mutual information between latent
// groups, the central-difference Jacobian-energy disentanglement metric, the
// eight-column MI report, and the sample-size trend sweep.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/model.hpp"
#include "mvlat/synth.hpp"
#include "mvlat/trainer.hpp"

namespace mvlat {

namespace detail {

// Sample std with ddof = 1 per column; throws on zero variance.
inline std::vector<double> column_stds(const Mat& x, const char* who) {
    const std::size_t n = x.rows();
    std::vector<double> out(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n - 1);
        if (var <= 0.0)
            throw std::invalid_argument(std::string(who) + ": zero variance in dimension " + std::to_string(j));
        out[j] = std::sqrt(var);
    }
    return out;
}

// Linear-interpolated empirical quantile of a sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace detail

// Leave-one-out Gaussian-product-kernel MI estimate in nats.  Bandwidths
// follow Scott's rule per marginal (h_j = std_j * N^(-1/(d+4)) with d the
// dimension of that marginal); the joint density uses the product of the two
// marginal kernels, so all normalizing constants cancel in the ratio.
inline double kde_mi(const Mat& x, const Mat& y) {
    const std::size_t n = x.rows();
    if (y.rows() != n)
        throw std::invalid_argument("kde_mi: row counts disagree");
    if (n < 50)
        throw std::invalid_argument("kde_mi: need at least 50 samples, got " + std::to_string(n));
    const std::size_t dx = x.cols();
    const std::size_t dy = y.cols();
    if (dx == 0 || dy == 0)
        throw std::invalid_argument("kde_mi: empty marginal");
    if (dx + dy > 4)
        throw std::invalid_argument("kde_mi: joint dimension " + std::to_string(dx + dy) +
                                    " exceeds 4, densities unreliable");

    const std::vector<double> sx = detail::column_stds(x, "kde_mi");
    const std::vector<double> sy = detail::column_stds(y, "kde_mi");
    const double hx_pow = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(dx) + 4.0));
    const double hy_pow = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(dy) + 4.0));

    // Pre-scale coordinates by their bandwidths; kernel exponents become
    // plain squared distances.
    Mat xs(n, dx), ys(n, dy);
    for (std::size_t j = 0; j < dx; ++j) {
        const double inv_h = 1.0 / (sx[j] * hx_pow);
        for (std::size_t i = 0; i < n; ++i) xs(i, j) = x(i, j) * inv_h;
    }
    for (std::size_t j = 0; j < dy; ++j) {
        const double inv_h = 1.0 / (sy[j] * hy_pow);
        for (std::size_t i = 0; i < n; ++i) ys(i, j) = y(i, j) * inv_h;
    }

    const double log_nm1 = std::log(static_cast<double>(n - 1));
    double mi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sum_x = 0.0, sum_y = 0.0, sum_xy = 0.0;
        const double* xi = xs.row(i);
        const double* yi = ys.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* xj = xs.row(j);
            const double* yj = ys.row(j);
            double qx = 0.0, qy = 0.0;
            for (std::size_t t = 0; t < dx; ++t) {
                const double d = xi[t] - xj[t];
                qx += d * d;
            }
            for (std::size_t t = 0; t < dy; ++t) {
                const double d = yi[t] - yj[t];
                qy += d * d;
            }
            const double kx = std::exp(-0.5 * qx);
            const double ky = std::exp(-0.5 * qy);
            sum_x += kx;
            sum_y += ky;
            sum_xy += kx * ky;
        }
        sum_x = std::max(sum_x, 1e-300);
        sum_y = std::max(sum_y, 1e-300);
        sum_xy = std::max(sum_xy, 1e-300);
        mi += std::log(sum_xy) - std::log(sum_x) - std::log(sum_y) + log_nm1;
    }
    return mi / static_cast<double>(n);
}

struct JacobianMetricResult {
    double value = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
    std::vector<double> deltas;  // per private dimension
};

// Monte-Carlo estimate of the expected squared sensitivity of the shared
// embedding h_S = f_S(g([z|c])) to the private coordinates, by central
// differences over the provided latent rows.  Rows whose perturbed c would
// leave the empirical 0.5th..99.5th percentile support are skipped (the
// bound only holds in the interior).  delta <= 0 selects the default step of
// 1e-3 times the per-dimension std of c.
inline JacobianMetricResult jacobian_energy_metric(const Mlp& encoder, const Mlp& mixer,
                                                   const Mat& z, const Mat& c,
                                                   double delta, std::size_t d_shared) {
    const std::size_t n = z.rows();
    if (c.rows() != n || n == 0)
        throw std::invalid_argument("jacobian_energy_metric: bad latent shapes");
    if (mixer.in_dim() != z.cols() + c.cols())
        throw std::invalid_argument("jacobian_energy_metric: mixer input dim mismatch");
    if (encoder.in_dim() != mixer.out_dim())
        throw std::invalid_argument("jacobian_energy_metric: encoder/mixer dims do not chain");
    if (encoder.out_dim() < d_shared)
        throw std::invalid_argument("jacobian_energy_metric: d_shared exceeds encoder output");
    const std::size_t dq = c.cols();

    JacobianMetricResult out;
    out.deltas.resize(dq);
    if (delta > 0.0) {
        std::fill(out.deltas.begin(), out.deltas.end(), delta);
    } else {
        const std::vector<double> stds = detail::column_stds(c, "jacobian_energy_metric");
        for (std::size_t j = 0; j < dq; ++j) out.deltas[j] = 1e-3 * stds[j];
    }

    std::vector<double> lo(dq), hi(dq);
    for (std::size_t j = 0; j < dq; ++j) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = c(i, j);
        std::sort(col.begin(), col.end());
        lo[j] = detail::quantile_sorted(col, 0.005);
        hi[j] = detail::quantile_sorted(col, 0.995);
    }

    std::vector<std::size_t> keep;
    keep.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool ok = true;
        for (std::size_t j = 0; j < dq; ++j) {
            if (c(i, j) - out.deltas[j] < lo[j] || c(i, j) + out.deltas[j] > hi[j]) {
                ok = false;
                break;
            }
        }
        if (ok) keep.push_back(i);
    }
    out.used = keep.size();
    out.skipped = n - keep.size();
    if (keep.empty())
        throw std::runtime_error("jacobian_energy_metric: every row left the support margin");

    // One batched forward over all 2*dq perturbations of every kept row.
    const std::size_t m = keep.size();
    Mat inputs(2 * dq * m, z.cols() + dq);
    std::size_t r = 0;
    for (std::size_t j = 0; j < dq; ++j) {
        for (int sign = 0; sign < 2; ++sign) {
            const double step = (sign == 0 ? out.deltas[j] : -out.deltas[j]);
            for (std::size_t k = 0; k < m; ++k, ++r) {
                const std::size_t i = keep[k];
                double* row = inputs.row(r);
                for (std::size_t t = 0; t < z.cols(); ++t) row[t] = z(i, t);
                for (std::size_t t = 0; t < dq; ++t) row[z.cols() + t] = c(i, t);
                row[z.cols() + j] += step;
            }
        }
    }
    const Mat h = apply(encoder, apply(mixer, inputs));

    double acc = 0.0;
    for (std::size_t j = 0; j < dq; ++j) {
        const std::size_t base_plus = (2 * j) * m;
        const std::size_t base_minus = (2 * j + 1) * m;
        const double inv_2d = 1.0 / (2.0 * out.deltas[j]);
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t i = 0; i < d_shared; ++i) {
                const double g = (h(base_plus + k, i) - h(base_minus + k, i)) * inv_2d;
                acc += g * g;
            }
        }
    }
    out.value = acc / static_cast<double>(m);
    return out;
}

// The eight MI values of the synthetic evaluation table, in nats.
struct MiReport {
    double z1_z = 0.0;  // MI(zhat1; z)
    double z2_z = 0.0;
    double z1_c1 = 0.0;
    double z2_c2 = 0.0;
    double c1_c1 = 0.0;  // MI(chat1; c1)
    double c2_c2 = 0.0;
    double c1_z = 0.0;
    double c2_z = 0.0;

    static const std::vector<std::string>& column_names() {
        static const std::vector<std::string> names = {
            "mi_z1_z", "mi_z2_z", "mi_z1_c1", "mi_z2_c2",
            "mi_c1_c1", "mi_c2_c2", "mi_c1_z", "mi_c2_z"};
        return names;
    }

    std::array<double, 8> values() const {
        return {z1_z, z2_z, z1_c1, z2_c2, c1_c1, c2_c2, c1_z, c2_z};
    }
};

inline MiReport mi_report(const ModelBundle& bundle, const Dataset& ds) {
    bundle.validate();
    const std::size_t d = bundle.dims.d;
    const EncodeSplitResult e1 = encode_split(bundle.f1, ds.x1, d);
    const EncodeSplitResult e2 = encode_split(bundle.f2, ds.x2, d);
    MiReport r;
    r.z1_z = kde_mi(e1.zhat, ds.z);
    r.z2_z = kde_mi(e2.zhat, ds.z);
    r.z1_c1 = kde_mi(e1.zhat, ds.c1);
    r.z2_c2 = kde_mi(e2.zhat, ds.c2);
    r.c1_c1 = kde_mi(e1.chat, ds.c1);
    r.c2_c2 = kde_mi(e2.chat, ds.c2);
    r.c1_z = kde_mi(e1.chat, ds.z);
    r.c2_z = kde_mi(e2.chat, ds.z);
    return r;
}

struct TrendRow {
    std::size_t n = 0;
    double mean_metric = 0.0;
    std::size_t failures = 0;
};

// Trains a fresh model per (N, seed) cell and evaluates the Jacobian-energy
// metric (mean of the two views) on the training latents; returns per-N
// means over the seeds that completed.
inline std::vector<TrendRow> sample_size_trend(const GenConfig& gen_template,
                                               const TrainConfig& train_template,
                                               std::size_t hidden_width, std::size_t hidden_layers,
                                               double delta,
                                               const std::vector<std::size_t>& n_list,
                                               const std::vector<std::uint64_t>& seeds) {
    if (n_list.empty())
        throw std::invalid_argument("sample_size_trend: empty N list");
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1])
            throw std::invalid_argument("sample_size_trend: N list must be strictly ascending");
    if (seeds.empty())
        throw std::invalid_argument("sample_size_trend: empty seed list");

    std::vector<TrendRow> out;
    for (std::size_t n : n_list) {
        TrendRow row;
        row.n = n;
        double acc = 0.0;
        std::size_t ok = 0;
        for (std::uint64_t seed : seeds) {
            try {
                GenConfig g = gen_template;
                g.n = n;
                g.seed = seed;
                TrainConfig t = train_template;
                t.seed = seed;
                const Dataset ds = generate(g);
                ModelDims dims{g.d_shared, g.d_private1, g.d_private2, g.m1(), g.m2()};
                const ModelBundle bundle = default_bundle(dims, hidden_width, hidden_layers, seed);
                const TrainResult tr = train(bundle, ds, t);
                const JacobianMetricResult j1 =
                    jacobian_energy_metric(tr.bundle.f1, ds.mixer1, ds.z, ds.c1, delta, dims.d);
                const JacobianMetricResult j2 =
                    jacobian_energy_metric(tr.bundle.f2, ds.mixer2, ds.z, ds.c2, delta, dims.d);
                acc += 0.5 * (j1.value + j2.value);
                ++ok;
            } catch (const std::exception&) {
                ++row.failures;
            }
        }
        row.mean_metric = ok ? acc / static_cast<double>(ok) : 0.0;
        out.push_back(row);
    }
    return out;
}

// Identifiability check: pairs sharing the same z but with
// independently redrawn private components should map to nearly identical
// shared embeddings.  Returns the mean squared embedding gap over the pairs.
inline double shared_consistency_gap(const ModelBundle& bundle, const Dataset& ds,
                                     std::size_t n_pairs, std::uint64_t seed) {
    GenConfig cfg = ds.provenance;
    cfg.n = n_pairs;
    const Latents a = sample_latents(cfg, seed);
    const Latents b = sample_latents(cfg, seed + 1);  // only c1 is used from this draw
    Mat c1a = a.c1, c1b = b.c1;
    if (cfg.target_spr_db1) {
        c1a = scale_to_spr(a.z, c1a, *cfg.target_spr_db1);
        c1b = scale_to_spr(a.z, c1b, *cfg.target_spr_db1);
    }
    const Mat xa = apply(ds.mixer1, hcat(a.z, c1a));
    const Mat xb = apply(ds.mixer1, hcat(a.z, c1b));
    const Mat za = encode_split(bundle.f1, xa, bundle.dims.d).zhat;
    const Mat zb = encode_split(bundle.f1, xb, bundle.dims.d).zhat;
    double acc = 0.0;
    for (std::size_t k = 0; k < za.size(); ++k) {
        const double d = za.data()[k] - zb.data()[k];
        acc += d * d;
    }
    return acc / static_cast<double>(n_pairs);
}

} // namespace mvlat
