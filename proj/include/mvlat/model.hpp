#pragma once

// The trainable bundle: per-view encoders whose outputs are split into a
// shared head (first D dims) and a private head, decoders over the
// concatenated heads, and scalar adversaries used by the independence
// regularizer.  The theta/eta split of the minimax problem is by network:
// theta = {f1, f2, r1, r2}, eta = {phi1, tau1, phi2, tau2}.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvlat/mat.hpp"
#include "mvlat/mlp.hpp"
#include "mvlat/rng.hpp"

namespace mvlat {

struct ModelDims {
    std::size_t d = 2;   // shared
    std::size_t d1 = 1;  // private, view 1
    std::size_t d2 = 1;  // private, view 2
    std::size_t m1 = 3;  // view 1 ambient
    std::size_t m2 = 3;  // view 2 ambient

    void validate() const {
        if (d < 1 || d1 < 1 || d2 < 1 || m1 < 1 || m2 < 1)
            throw std::invalid_argument("ModelDims: all dimensions must be >= 1");
    }
};

struct ModelBundle {
    Mlp f1, f2;      // encoders, M_q -> D + D_q
    Mlp r1, r2;      // decoders, D + D_q -> M_q
    Mlp phi1, phi2;  // shared-side adversaries, D -> 1
    Mlp tau1, tau2;  // private-side adversaries, D_q -> 1
    ModelDims dims;

    void validate() const {
        dims.validate();
        f1.validate(); f2.validate(); r1.validate(); r2.validate();
        phi1.validate(); phi2.validate(); tau1.validate(); tau2.validate();
        auto expect = [](const Mlp& net, std::size_t in, std::size_t out, const char* name) {
            if (net.in_dim() != in || net.out_dim() != out)
                throw std::invalid_argument(std::string("ModelBundle: ") + name + " has dims " +
                                            std::to_string(net.in_dim()) + "->" + std::to_string(net.out_dim()) +
                                            ", expected " + std::to_string(in) + "->" + std::to_string(out));
        };
        expect(f1, dims.m1, dims.d + dims.d1, "f1");
        expect(f2, dims.m2, dims.d + dims.d2, "f2");
        expect(r1, dims.d + dims.d1, dims.m1, "r1");
        expect(r2, dims.d + dims.d2, dims.m2, "r2");
        expect(phi1, dims.d, 1, "phi1");
        expect(phi2, dims.d, 1, "phi2");
        expect(tau1, dims.d1, 1, "tau1");
        expect(tau2, dims.d2, 1, "tau2");
    }

    std::vector<const Mlp*> theta_networks() const { return {&f1, &f2, &r1, &r2}; }
    std::vector<const Mlp*> eta_networks() const { return {&phi1, &tau1, &phi2, &tau2}; }

    std::size_t theta_param_count() const {
        std::size_t n = 0;
        for (const Mlp* net : theta_networks()) n += net->param_count();
        return n;
    }
    std::size_t eta_param_count() const {
        std::size_t n = 0;
        for (const Mlp* net : eta_networks()) n += net->param_count();
        return n;
    }
};

struct EncodeSplitResult {
    Mat zhat;  // batch x D
    Mat chat;  // batch x D_q
};

// First d_shared output dims are the shared embedding, the rest private.
inline EncodeSplitResult encode_split(const Mlp& encoder, const Mat& x, std::size_t d_shared) {
    if (encoder.out_dim() <= d_shared)
        throw std::invalid_argument("encode_split: encoder output dim " + std::to_string(encoder.out_dim()) +
                                    " leaves no private head beyond d_shared = " + std::to_string(d_shared));
    const Mat y = apply(encoder, x);
    EncodeSplitResult out;
    out.zhat = slice_cols(y, 0, d_shared);
    out.chat = slice_cols(y, d_shared, y.cols());
    return out;
}

inline Mat decode(const Mlp& decoder, const Mat& zhat, const Mat& chat) {
    return apply(decoder, hcat(zhat, chat));
}

// Reference architecture at the defaults (width 256, 3 hidden layers): relu
// encoders/decoders, and 2-hidden-layer relu adversaries at half width with
// a scalar identity output.
inline ModelBundle default_bundle(const ModelDims& dims, std::size_t hidden_width,
                                  std::size_t hidden_layers, std::uint64_t seed) {
    dims.validate();
    if (hidden_width < 2)
        throw std::invalid_argument("default_bundle: hidden_width must be >= 2");
    const std::size_t adv_width = hidden_width / 2;

    ModelBundle b;
    b.dims = dims;
    b.f1 = make_mlp(dims.m1, hidden_width, hidden_layers, dims.d + dims.d1, Activation::relu);
    b.f2 = make_mlp(dims.m2, hidden_width, hidden_layers, dims.d + dims.d2, Activation::relu);
    b.r1 = make_mlp(dims.d + dims.d1, hidden_width, hidden_layers, dims.m1, Activation::relu);
    b.r2 = make_mlp(dims.d + dims.d2, hidden_width, hidden_layers, dims.m2, Activation::relu);
    b.phi1 = make_mlp(dims.d, adv_width, 2, 1, Activation::relu);
    b.phi2 = make_mlp(dims.d, adv_width, 2, 1, Activation::relu);
    b.tau1 = make_mlp(dims.d1, adv_width, 2, 1, Activation::relu);
    b.tau2 = make_mlp(dims.d2, adv_width, 2, 1, Activation::relu);

    Rng rng = Rng::stream(seed, stream_id::model_init);
    init_params(b.f1, rng);
    init_params(b.f2, rng);
    init_params(b.r1, rng);
    init_params(b.r2, rng);
    init_params(b.phi1, rng);
    init_params(b.phi2, rng);
    init_params(b.tau1, rng);
    init_params(b.tau2, rng);
    b.validate();
    return b;
}

} // namespace mvlat
