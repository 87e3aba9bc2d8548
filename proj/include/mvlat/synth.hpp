#pragma once

// Synthetic two-view benchmark: latents on a noisy unit circle plus per-view
// private components, pushed through random one-hidden-layer softplus mixing
// networks.  The private interference level is controlled through the
// shared-to-private ratio (SPR, in dB).

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/rng.hpp"

namespace mvlat {

struct PrivateSpec {
    enum class Kind { gaussian, laplace };
    Kind kind = Kind::gaussian;
    double param = 1.0;  // gaussian: variance; laplace: scale
};

struct GenConfig {
    std::size_t n = 5000;
    std::size_t d_shared = 2;
    std::size_t d_private1 = 1;
    std::size_t d_private2 = 1;
    double noise_sigma = 0.02;
    PrivateSpec private1{PrivateSpec::Kind::gaussian, 2.0};
    PrivateSpec private2{PrivateSpec::Kind::laplace, 4.0};
    std::size_t mixer_hidden = 3;
    Activation mixer_activation = Activation::softplus;
    std::optional<double> target_spr_db1;
    std::optional<double> target_spr_db2;
    std::uint64_t seed = 0;

    // The mixers are square maps: view dimension equals latent dimension.
    std::size_t m1() const { return d_shared + d_private1; }
    std::size_t m2() const { return d_shared + d_private2; }

    void validate() const {
        if (n < 1) throw std::invalid_argument("GenConfig: n must be >= 1");
        if (d_shared < 1 || d_private1 < 1 || d_private2 < 1)
            throw std::invalid_argument("GenConfig: dimensions must be >= 1");
        if (noise_sigma < 0.0)
            throw std::invalid_argument("GenConfig: noise_sigma must be >= 0");
        if (private1.param <= 0.0 || private2.param <= 0.0)
            throw std::invalid_argument("GenConfig: private distribution parameter must be positive");
        if (mixer_hidden < 1)
            throw std::invalid_argument("GenConfig: mixer_hidden must be >= 1");
    }
};

struct Latents {
    Mat z, c1, c2;
};

struct Dataset {
    Mat x1, x2;
    Mat z, c1, c2;
    GenConfig provenance;
    Mlp mixer1, mixer2;
};

namespace detail {

inline Mat sample_private(const PrivateSpec& spec, std::size_t n, std::size_t d, Rng& rng) {
    Mat c(n, d);
    if (spec.kind == PrivateSpec::Kind::gaussian) {
        const double stddev = std::sqrt(spec.param);
        for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] = rng.normal(0.0, stddev);
    } else {
        for (std::size_t k = 0; k < c.size(); ++k) c.data()[k] = rng.laplace(spec.param);
    }
    return c;
}

} // namespace detail

// Shared latents on the unit circle with additive Gaussian noise, private
// latents from the configured distributions.  The three blocks come from
// independent substreams of the given seed, so e.g. redrawing privates never
// moves the circle samples.
inline Latents sample_latents(const GenConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.d_shared != 2)
        throw std::invalid_argument("sample_latents: the circle prior is 2-D, got d_shared = " +
                                    std::to_string(cfg.d_shared));
    Latents out;
    Rng rz = Rng::stream(seed, stream_id::latents_z);
    out.z = Mat(cfg.n, 2);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const double theta = rz.uniform(0.0, 6.283185307179586476925286766559);
        out.z(i, 0) = std::cos(theta);
        out.z(i, 1) = std::sin(theta);
        if (cfg.noise_sigma > 0.0) {
            out.z(i, 0) += rz.normal(0.0, cfg.noise_sigma);
            out.z(i, 1) += rz.normal(0.0, cfg.noise_sigma);
        }
    }
    Rng rc1 = Rng::stream(seed, stream_id::latents_c1);
    Rng rc2 = Rng::stream(seed, stream_id::latents_c2);
    out.c1 = detail::sample_private(cfg.private1, cfg.n, cfg.d_private1, rc1);
    out.c2 = detail::sample_private(cfg.private2, cfg.n, cfg.d_private2, rc2);
    return out;
}

// Minimum singular value of the network Jacobian at x.
inline double jacobian_min_singular(const Mlp& net, const std::vector<double>& x) {
    Mat j = jacobian_at(net, x);
    if (j.rows() > j.cols()) j = transpose(j);
    const Svd svd = small_svd(j);
    return svd.sigma.back();
}

// One-hidden-layer softplus network with standard-normal parameters,
// redrawn until its Jacobian is well conditioned (min singular value at
// least 1e-3 at 32 standard-normal probe points).
inline Mlp make_mixer(std::size_t in_dim, std::size_t out_dim, std::size_t hidden, Rng& rng,
                      Activation hidden_act = Activation::softplus) {
    if (in_dim < 1 || out_dim < 1 || hidden < 1)
        throw std::invalid_argument("make_mixer: dims must be >= 1");
    constexpr int kMaxRedraws = 50;
    constexpr int kProbes = 32;
    constexpr double kMinSigma = 1e-3;
    double worst_best = 0.0;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        Mlp net = make_mlp(in_dim, hidden, 1, out_dim, hidden_act);
        init_params_standard_normal(net, rng);
        double worst = std::numeric_limits<double>::infinity();
        std::vector<double> probe(in_dim);
        for (int p = 0; p < kProbes; ++p) {
            for (auto& v : probe) v = rng.normal();
            worst = std::min(worst, jacobian_min_singular(net, probe));
            if (worst < kMinSigma) break;
        }
        if (worst >= kMinSigma) return net;
        worst_best = std::max(worst_best, worst);
    }
    throw std::runtime_error("make_mixer: 50 draws produced near-singular Jacobians (best min sigma " +
                             std::to_string(worst_best) + ")");
}

// 10 log10 of per-dimension shared energy over private energy.
inline double compute_spr(const Mat& z, const Mat& c) {
    if (z.rows() != c.rows())
        throw std::invalid_argument("compute_spr: row counts disagree");
    if (z.rows() == 0 || z.cols() == 0 || c.cols() == 0)
        throw std::invalid_argument("compute_spr: empty input");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) num += z.data()[k] * z.data()[k];
    for (std::size_t k = 0; k < c.size(); ++k) den += c.data()[k] * c.data()[k];
    num /= static_cast<double>(z.size());
    den /= static_cast<double>(c.size());
    if (den == 0.0)
        throw std::invalid_argument("compute_spr: private component is all zero, ratio undefined");
    if (num == 0.0)
        throw std::invalid_argument("compute_spr: shared component is all zero, ratio undefined");
    return 10.0 * std::log10(num / den);
}

// Rescales C so that compute_spr(Z, alpha*C) hits the target exactly.
inline Mat scale_to_spr(const Mat& z, const Mat& c, double target_db) {
    const double current = compute_spr(z, c);
    const double alpha = std::pow(10.0, (current - target_db) / 20.0);
    return c * alpha;
}

// Views from existing mixers; used both by generate() and by evaluation
// paths that redraw latents under the original mixing networks.
inline Dataset generate_with_mixers(const GenConfig& cfg, std::uint64_t latent_seed,
                                    const Mlp& mixer1, const Mlp& mixer2) {
    cfg.validate();
    if (mixer1.in_dim() != cfg.m1() || mixer2.in_dim() != cfg.m2())
        throw std::invalid_argument("generate_with_mixers: mixer input dims do not match config");
    Dataset ds;
    Latents lat = sample_latents(cfg, latent_seed);
    ds.z = std::move(lat.z);
    ds.c1 = cfg.target_spr_db1 ? scale_to_spr(ds.z, lat.c1, *cfg.target_spr_db1) : std::move(lat.c1);
    ds.c2 = cfg.target_spr_db2 ? scale_to_spr(ds.z, lat.c2, *cfg.target_spr_db2) : std::move(lat.c2);
    ds.x1 = apply(mixer1, hcat(ds.z, ds.c1));
    ds.x2 = apply(mixer2, hcat(ds.z, ds.c2));
    ds.provenance = cfg;
    ds.mixer1 = mixer1;
    ds.mixer2 = mixer2;
    ensure_finite(ds.x1, "generate: view 1");
    ensure_finite(ds.x2, "generate: view 2");
    return ds;
}

inline Dataset generate(const GenConfig& cfg) {
    cfg.validate();
    Rng rm1 = Rng::stream(cfg.seed, stream_id::mixer1);
    Rng rm2 = Rng::stream(cfg.seed, stream_id::mixer2);
    const Mlp mixer1 = make_mixer(cfg.m1(), cfg.m1(), cfg.mixer_hidden, rm1, cfg.mixer_activation);
    const Mlp mixer2 = make_mixer(cfg.m2(), cfg.m2(), cfg.mixer_hidden, rm2, cfg.mixer_activation);
    return generate_with_mixers(cfg, cfg.seed, mixer1, mixer2);
}

} // namespace mvlat
