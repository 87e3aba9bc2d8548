#pragma once

// Fully connected networks with reverse-mode gradients and the Adam update.
// This is the whole of the autodiff surface: every network in the method
// (encoders, decoders, mixers, adversaries) is an Mlp.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvlat/mat.hpp"
#include "mvlat/rng.hpp"

namespace mvlat {

enum class Activation { identity, relu, softplus, tanh_act };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        case Activation::tanh_act: return "tanh";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    if (s == "tanh") return Activation::tanh_act;
    throw std::invalid_argument("unknown activation: " + s);
}

// Numerically stable softplus: exact for large |x|, no overflow.
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double activation_apply(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::softplus: return softplus(x);
        case Activation::tanh_act: return std::tanh(x);
    }
    return x;
}

// Derivative with respect to the pre-activation.  relu'(0) is taken as 0.
inline double activation_derivative(Activation a, double pre) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::softplus: return 1.0 / (1.0 + std::exp(-pre));
        case Activation::tanh_act: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::identity;
    Mat w;                  // out x in
    std::vector<double> b;  // out
};

struct Mlp {
    std::vector<Layer> layers;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            if (l.w.rows() != l.out || l.w.cols() != l.in)
                throw std::invalid_argument("Mlp: layer " + std::to_string(k) + " weight shape mismatch");
            if (l.b.size() != l.out)
                throw std::invalid_argument("Mlp: layer " + std::to_string(k) + " bias length mismatch");
            if (k + 1 < layers.size() && l.out != layers[k + 1].in)
                throw std::invalid_argument("Mlp: layer " + std::to_string(k) + " does not chain into layer " +
                                            std::to_string(k + 1));
            if (!l.w.all_finite())
                throw std::invalid_argument("Mlp: layer " + std::to_string(k) + " has non-finite weights");
            for (double v : l.b)
                if (!std::isfinite(v))
                    throw std::invalid_argument("Mlp: layer " + std::to_string(k) + " has non-finite biases");
        }
    }
};

// Architecture helper: in -> hidden_width x hidden_count (hidden_act) -> out.
inline Mlp make_mlp(std::size_t in_dim, std::size_t hidden_width, std::size_t hidden_count,
                    std::size_t out_dim, Activation hidden_act,
                    Activation out_act = Activation::identity) {
    if (in_dim == 0 || out_dim == 0 || (hidden_count > 0 && hidden_width == 0))
        throw std::invalid_argument("make_mlp: zero dimension");
    Mlp net;
    std::size_t prev = in_dim;
    for (std::size_t k = 0; k < hidden_count; ++k) {
        Layer l;
        l.in = prev;
        l.out = hidden_width;
        l.act = hidden_act;
        l.w = Mat(l.out, l.in);
        l.b.assign(l.out, 0.0);
        net.layers.push_back(std::move(l));
        prev = hidden_width;
    }
    Layer l;
    l.in = prev;
    l.out = out_dim;
    l.act = out_act;
    l.w = Mat(l.out, l.in);
    l.b.assign(l.out, 0.0);
    net.layers.push_back(std::move(l));
    return net;
}

// Variance-preserving init: weights N(0, 2/(in+out)), biases 0.
inline void init_params(Mlp& net, Rng& rng) {
    for (auto& l : net.layers) {
        const double std = std::sqrt(2.0 / static_cast<double>(l.in + l.out));
        for (std::size_t k = 0; k < l.w.size(); ++k) l.w.data()[k] = rng.normal(0.0, std);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
}

// Standard-normal init used by the synthetic mixing networks.
inline void init_params_standard_normal(Mlp& net, Rng& rng) {
    for (auto& l : net.layers) {
        for (std::size_t k = 0; k < l.w.size(); ++k) l.w.data()[k] = rng.normal();
        for (auto& v : l.b) v = rng.normal();
    }
}

struct ForwardTrace {
    Mat input;
    std::vector<Mat> pre;   // per layer, batch x out
    std::vector<Mat> post;  // per layer, batch x out

    std::size_t batch() const { return input.rows(); }
    const Mat& output() const { return post.back(); }
};

inline ForwardTrace forward(const Mlp& net, const Mat& x) {
    if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
    if (x.cols() != net.in_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " cols, network expects " + std::to_string(net.in_dim()));
    ForwardTrace tr;
    tr.input = x;
    const Mat* cur = &tr.input;
    for (const auto& l : net.layers) {
        Mat pre = matmul_nt(*cur, l.w);
        for (std::size_t i = 0; i < pre.rows(); ++i) {
            double* row = pre.row(i);
            for (std::size_t j = 0; j < l.out; ++j) row[j] += l.b[j];
        }
        Mat post(pre.rows(), pre.cols());
        for (std::size_t k = 0; k < pre.size(); ++k)
            post.data()[k] = activation_apply(l.act, pre.data()[k]);
        tr.pre.push_back(std::move(pre));
        tr.post.push_back(std::move(post));
        cur = &tr.post.back();
    }
    return tr;
}

// Forward pass without keeping the trace; use for inference-only paths.
inline Mat apply(const Mlp& net, const Mat& x) {
    if (net.layers.empty()) throw std::invalid_argument("apply: empty network");
    if (x.cols() != net.in_dim())
        throw std::invalid_argument("apply: input has " + std::to_string(x.cols()) +
                                    " cols, network expects " + std::to_string(net.in_dim()));
    Mat cur = x;
    for (const auto& l : net.layers) {
        Mat pre = matmul_nt(cur, l.w);
        for (std::size_t i = 0; i < pre.rows(); ++i) {
            double* row = pre.row(i);
            for (std::size_t j = 0; j < l.out; ++j)
                row[j] = activation_apply(l.act, row[j] + l.b[j]);
        }
        cur = std::move(pre);
    }
    return cur;
}

struct MlpGrads {
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;

    static MlpGrads zeros_like(const Mlp& net) {
        MlpGrads g;
        for (const auto& l : net.layers) {
            g.w.emplace_back(l.out, l.in);
            g.b.emplace_back(l.out, 0.0);
        }
        return g;
    }

    MlpGrads& scale(double s) {
        for (auto& m : w) m *= s;
        for (auto& v : b)
            for (auto& x : v) x *= s;
        return *this;
    }

    MlpGrads& accumulate(const MlpGrads& o, double s = 1.0) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            for (std::size_t i = 0; i < w[k].size(); ++i)
                w[k].data()[i] += s * o.w[k].data()[i];
            for (std::size_t i = 0; i < b[k].size(); ++i)
                b[k][i] += s * o.b[k][i];
        }
        return *this;
    }
};

struct BackwardResult {
    MlpGrads grads;
    Mat grad_x;  // batch x in_dim, for chaining composed networks
};

// Reverse-mode derivatives of sum(grad_y .* y) with respect to parameters
// and the input.
inline BackwardResult backward(const Mlp& net, const ForwardTrace& trace, const Mat& grad_y) {
    const std::size_t nl = net.layers.size();
    if (trace.pre.size() != nl || trace.post.size() != nl)
        throw std::invalid_argument("backward: trace does not match network depth");
    if (grad_y.rows() != trace.batch() || grad_y.cols() != net.out_dim())
        throw std::invalid_argument("backward: grad_y shape mismatch");

    BackwardResult out;
    out.grads.w.resize(nl);
    out.grads.b.resize(nl);

    Mat delta = grad_y;
    for (std::size_t k = nl; k-- > 0;) {
        const Layer& l = net.layers[k];
        const Mat& pre = trace.pre[k];
        if (delta.rows() != pre.rows() || delta.cols() != pre.cols())
            throw std::invalid_argument("backward: stale trace at layer " + std::to_string(k));
        for (std::size_t idx = 0; idx < delta.size(); ++idx)
            delta.data()[idx] *= activation_derivative(l.act, pre.data()[idx]);

        const Mat& layer_in = (k == 0) ? trace.input : trace.post[k - 1];
        out.grads.w[k] = matmul_tn(delta, layer_in);
        out.grads.b[k].assign(l.out, 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
            const double* row = delta.row(i);
            for (std::size_t j = 0; j < l.out; ++j) out.grads.b[k][j] += row[j];
        }
        delta = matmul(delta, l.w);
    }
    out.grad_x = std::move(delta);
    return out;
}

// Analytic Jacobian dy/dx at a single input row: product of per-layer
// diag(act'(pre)) * W factors.  Used by the mixer conditioning guard and as
// a cross-check for the central-difference evaluation path.
inline Mat jacobian_at(const Mlp& net, const std::vector<double>& x) {
    if (x.size() != net.in_dim())
        throw std::invalid_argument("jacobian_at: input dim mismatch");
    Mat row(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) row(0, j) = x[j];
    ForwardTrace tr = forward(net, row);

    Mat jac;  // starts empty; after layer k holds d(post_k)/dx
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const Layer& l = net.layers[k];
        Mat dw = l.w;  // rows scaled by the activation derivative
        for (std::size_t i = 0; i < l.out; ++i) {
            const double d = activation_derivative(l.act, tr.pre[k](0, i));
            double* r = dw.row(i);
            for (std::size_t j = 0; j < l.in; ++j) r[j] *= d;
        }
        jac = (k == 0) ? std::move(dw) : matmul(dw, jac);
    }
    return jac;
}

namespace detail {

inline void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                        long long t, double lr, double decay,
                        double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < n; ++k) {
        const double grad = g[k] + decay * p[k];
        m[k] = beta1 * m[k] + (1.0 - beta1) * grad;
        v[k] = beta2 * v[k] + (1.0 - beta2) * grad * grad;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace detail

struct AdamState {
    double lr = 1e-3;
    double decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long t = 0;
    std::vector<Mat> mw, vw;
    std::vector<std::vector<double>> mb, vb;

    static AdamState for_net(const Mlp& net, double lr, double decay = 0.0) {
        AdamState st;
        st.lr = lr;
        st.decay = decay;
        for (const auto& l : net.layers) {
            st.mw.emplace_back(l.out, l.in);
            st.vw.emplace_back(l.out, l.in);
            st.mb.emplace_back(l.out, 0.0);
            st.vb.emplace_back(l.out, 0.0);
        }
        return st;
    }
};

inline void adam_step(Mlp& net, const MlpGrads& grads, AdamState& st) {
    if (grads.w.size() != net.layers.size() || st.mw.size() != net.layers.size())
        throw std::invalid_argument("adam_step: state/gradient layer count mismatch");
    ++st.t;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Layer& l = net.layers[k];
        detail::adam_update(l.w.data(), grads.w[k].data(), st.mw[k].data(), st.vw[k].data(),
                            l.w.size(), st.t, st.lr, st.decay, st.beta1, st.beta2, st.eps);
        detail::adam_update(l.b.data(), grads.b[k].data(), st.mb[k].data(), st.vb[k].data(),
                            l.b.size(), st.t, st.lr, st.decay, st.beta1, st.beta2, st.eps);
    }
}

// Adam over a raw parameter block (used for the slack matrix in the
// InfoNCE variant, where U is updated by gradient rather than by SVD).
struct AdamArrayState {
    double lr = 1e-3;
    double decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long t = 0;
    std::vector<double> m, v;

    static AdamArrayState for_size(std::size_t n, double lr, double decay = 0.0) {
        AdamArrayState st;
        st.lr = lr;
        st.decay = decay;
        st.m.assign(n, 0.0);
        st.v.assign(n, 0.0);
        return st;
    }
};

inline void adam_step(double* params, const double* grads, std::size_t n, AdamArrayState& st) {
    if (st.m.size() != n)
        throw std::invalid_argument("adam_step: array state size mismatch");
    ++st.t;
    detail::adam_update(params, grads, st.m.data(), st.v.data(), n, st.t, st.lr, st.decay,
                        st.beta1, st.beta2, st.eps);
}

} // namespace mvlat
