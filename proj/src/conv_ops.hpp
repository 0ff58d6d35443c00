#pragma once

// 3x3 convolution kernels with zero padding 1 over HWC row-major buffers.
// Weight layout: w[((o * 3 + ky) * 3 + kx) * in_c + c], one bias per output channel.

#include <cmath>
#include <cstddef>

namespace langdaug::detail {

struct ConvGeometry {
    int in_h;
    int in_w;
    int in_c;
    int out_c;
    int stride;

    int out_h() const { return (in_h - 1) / stride + 1; }
    int out_w() const { return (in_w - 1) / stride + 1; }
    std::ptrdiff_t weight_count() const { return std::ptrdiff_t{9} * in_c * out_c; }
    std::ptrdiff_t param_count() const { return weight_count() + out_c; }
    std::ptrdiff_t out_size() const { return std::ptrdiff_t{out_h()} * out_w() * out_c; }
};

inline void conv3x3_forward(const ConvGeometry& g, const double* in, const double* w, const double* b, double* out) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* o_px = out + (std::ptrdiff_t{oy} * ow + ox) * g.out_c;
            for (int o = 0; o < g.out_c; ++o) o_px[o] = b[o];
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * g.stride + ky - 1;
                if (iy < 0 || iy >= g.in_h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * g.stride + kx - 1;
                    if (ix < 0 || ix >= g.in_w) continue;
                    const double* i_px = in + (std::ptrdiff_t{iy} * g.in_w + ix) * g.in_c;
                    for (int o = 0; o < g.out_c; ++o) {
                        const double* wk = w + ((std::ptrdiff_t{o} * 3 + ky) * 3 + kx) * g.in_c;
                        double acc = 0.0;
                        for (int c = 0; c < g.in_c; ++c) acc += wk[c] * i_px[c];
                        o_px[o] += acc;
                    }
                }
            }
        }
    }
}

/// Accumulates into grad_in / grad_w / grad_b; any of them may be null.
inline void conv3x3_backward(const ConvGeometry& g, const double* in, const double* w, const double* grad_out,
                             double* grad_in, double* grad_w, double* grad_b) {
    const int oh = g.out_h();
    const int ow = g.out_w();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* go = grad_out + (std::ptrdiff_t{oy} * ow + ox) * g.out_c;
            if (grad_b) {
                for (int o = 0; o < g.out_c; ++o) grad_b[o] += go[o];
            }
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * g.stride + ky - 1;
                if (iy < 0 || iy >= g.in_h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * g.stride + kx - 1;
                    if (ix < 0 || ix >= g.in_w) continue;
                    const std::ptrdiff_t i_off = (std::ptrdiff_t{iy} * g.in_w + ix) * g.in_c;
                    for (int o = 0; o < g.out_c; ++o) {
                        const double gv = go[o];
                        if (gv == 0.0) continue;
                        const std::ptrdiff_t w_off = ((std::ptrdiff_t{o} * 3 + ky) * 3 + kx) * g.in_c;
                        if (grad_w) {
                            for (int c = 0; c < g.in_c; ++c) grad_w[w_off + c] += gv * in[i_off + c];
                        }
                        if (grad_in) {
                            for (int c = 0; c < g.in_c; ++c) grad_in[i_off + c] += gv * w[w_off + c];
                        }
                    }
                }
            }
        }
    }
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace langdaug::detail
