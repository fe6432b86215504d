// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "latentbridge/core/gemm.hpp"
#include "latentbridge/core/graph.hpp"

// Differentiable op library. Every op appends one node; backward closures
// capture node indices (never references) so tape growth stays safe.
// Elementwise ops require identical shapes; broadcasting is explicit.

namespace lb {

namespace detail {

template <class S>
bool any_needs(std::initializer_list<Var<S>> vs) {
    for (const auto& v : vs)
        if (v.needs_grad()) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
    check(a.val().same_shape(b.val()), ErrorKind::shape, "add: shape mismatch");
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] += b.val().data[i];
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i];
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i];
            }
        };
    }
    return y;
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
    check(a.val().same_shape(b.val()), ErrorKind::shape, "sub: shape mismatch");
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.val().data[i];
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i];
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < gy.numel(); ++i) gb.data[i] -= gy.data[i];
            }
        };
    }
    return y;
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
    check(a.val().same_shape(b.val()), ErrorKind::shape, "mul: shape mismatch");
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.val().data[i];
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& av = tp.val(ai);
            const auto& bv = tp.val(bi);
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i] * bv.data[i];
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i] * av.data[i];
            }
        };
    }
    return y;
}

template <class S>
Var<S> scale(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) v *= c;
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, c](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i] * c;
        };
    }
    return y;
}

template <class S>
Var<S> add_const(Var<S> a, S c) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) v += c;
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i];
        };
    }
    return y;
}

// ---------------------------------------------------------------- activations

template <class S>
Var<S> leaky_relu(Var<S> a, S slope = S(0.2)) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = v >= S(0) ? v : v * slope;
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, slope](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& av = tp.val(ai);
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i)
                ga.data[i] += av.data[i] >= S(0) ? gy.data[i] : gy.data[i] * slope;
        };
    }
    return y;
}

template <class S>
Var<S> silu(Var<S> a) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) {
        const S s = S(1) / (S(1) + std::exp(-v));
        v = v * s;
    }
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& av = tp.val(ai);
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i) {
                const S x = av.data[i];
                const S s = S(1) / (S(1) + std::exp(-x));
                ga.data[i] += gy.data[i] * s * (S(1) + x * (S(1) - s));
            }
        };
    }
    return y;
}

template <class S>
Var<S> tanh_op(Var<S> a) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = std::tanh(v);
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& yv = tp.val(yi);
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i)
                ga.data[i] += gy.data[i] * (S(1) - yv.data[i] * yv.data[i]);
        };
    }
    return y;
}

template <class S>
Var<S> sigmoid_op(Var<S> a) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data) v = S(1) / (S(1) + std::exp(-v));
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& yv = tp.val(yi);
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i)
                ga.data[i] += gy.data[i] * yv.data[i] * (S(1) - yv.data[i]);
        };
    }
    return y;
}

// ------------------------------------------------------------------- matrices

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
    const auto& av = a.val();
    const auto& bv = b.val();
    check(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), ErrorKind::shape,
          "matmul: incompatible " + av.shape_str() + " x " + bv.shape_str());
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tape<S>& t = *a.tape;
    Tensor<S> out({m, n});
    gemm(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi, m, k, n](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            if (tp.node(ai).needs_grad) {
                // dA[M,K] = dY[M,N] * B^T
                gemm_bt(gy.data.data(), tp.val(bi).data.data(), tp.grad_ref(ai).data.data(), m, n,
                        k, true);
            }
            if (tp.node(bi).needs_grad) {
                // dB[K,N] = A^T * dY
                gemm_at(tp.val(ai).data.data(), gy.data.data(), tp.grad_ref(bi).data.data(), k, m,
                        n, true);
            }
        };
    }
    return y;
}

template <class S>
Var<S> transpose(Var<S> a) {
    const auto& av = a.val();
    check(av.rank() == 2, ErrorKind::shape, "transpose: rank-2 only");
    const int r = av.dim(0), c = av.dim(1);
    Tape<S>& t = *a.tape;
    Tensor<S> out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, r, c](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) ga.at(i, j) += gy.at(j, i);
        };
    }
    return y;
}

// y[out] = W[out,in] * x[in] + b[out]
template <class S>
Var<S> linear_vec(Var<S> x, Var<S> w, Var<S> b) {
    const auto& xv = x.val();
    const auto& wv = w.val();
    check(xv.rank() == 1 && wv.rank() == 2 && wv.dim(1) == xv.dim(0), ErrorKind::shape,
          "linear_vec: incompatible shapes");
    const int out_n = wv.dim(0), in_n = wv.dim(1);
    Tape<S>& t = *x.tape;
    Tensor<S> out({out_n});
    for (int o = 0; o < out_n; ++o) {
        S acc = b.val().data[static_cast<size_t>(o)];
        const S* wr = wv.data.data() + static_cast<size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) acc += wr[i] * xv.data[static_cast<size_t>(i)];
        out.data[static_cast<size_t>(o)] = acc;
    }
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, w, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, wi = w.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [xi, wi, bi, yi, out_n, in_n](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& xv2 = tp.val(xi);
            const auto& wv2 = tp.val(wi);
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (int o = 0; o < out_n; ++o) gb.data[static_cast<size_t>(o)] += gy.data[static_cast<size_t>(o)];
            }
            if (tp.node(wi).needs_grad) {
                auto& gw = tp.grad_ref(wi);
                for (int o = 0; o < out_n; ++o) {
                    const S g = gy.data[static_cast<size_t>(o)];
                    if (g == S(0)) continue;
                    S* gwr = gw.data.data() + static_cast<size_t>(o) * in_n;
                    for (int i = 0; i < in_n; ++i) gwr[i] += g * xv2.data[static_cast<size_t>(i)];
                }
            }
            if (tp.node(xi).needs_grad) {
                auto& gx = tp.grad_ref(xi);
                for (int o = 0; o < out_n; ++o) {
                    const S g = gy.data[static_cast<size_t>(o)];
                    if (g == S(0)) continue;
                    const S* wr = wv2.data.data() + static_cast<size_t>(o) * in_n;
                    for (int i = 0; i < in_n; ++i) gx.data[static_cast<size_t>(i)] += g * wr[i];
                }
            }
        };
    }
    return y;
}

// Y[N,out] = X[N,in] * W^T[in,out] + b (b broadcast along rows)
template <class S>
Var<S> linear_rows(Var<S> x, Var<S> w, Var<S> b) {
    const auto& xv = x.val();
    const auto& wv = w.val();
    check(xv.rank() == 2 && wv.rank() == 2 && wv.dim(1) == xv.dim(1), ErrorKind::shape,
          "linear_rows: incompatible shapes");
    const int rows = xv.dim(0), in_n = xv.dim(1), out_n = wv.dim(0);
    Tape<S>& t = *x.tape;
    Tensor<S> out({rows, out_n});
    gemm_bt(xv.data.data(), wv.data.data(), out.data.data(), rows, in_n, out_n);
    for (int r = 0; r < rows; ++r)
        for (int o = 0; o < out_n; ++o) out.at(r, o) += b.val().data[static_cast<size_t>(o)];
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, w, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, wi = w.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [xi, wi, bi, yi, rows, in_n, out_n](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;  // [rows, out]
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (int r = 0; r < rows; ++r)
                    for (int o = 0; o < out_n; ++o) gb.data[static_cast<size_t>(o)] += gy.at(r, o);
            }
            if (tp.node(wi).needs_grad) {
                // dW[out,in] = dY^T[out,rows] * X[rows,in]
                gemm_at(gy.data.data(), tp.val(xi).data.data(), tp.grad_ref(wi).data.data(), out_n,
                        rows, in_n, true);
            }
            if (tp.node(xi).needs_grad) {
                // dX[rows,in] = dY[rows,out] * W[out,in]
                gemm(gy.data.data(), tp.val(wi).data.data(), tp.grad_ref(xi).data.data(), rows,
                     out_n, in_n, true);
            }
        };
    }
    return y;
}

// ---------------------------------------------------------------- convolution

namespace detail {

template <class S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, int oh, int ow,
            Tensor<S>& col) {
    const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    size_t r = 0;
    for (int c = 0; c < c_in; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, ++r) {
                S* dst = col.data.data() + r * static_cast<size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) dst[static_cast<size_t>(oy) * ow + ox] = S(0);
                        continue;
                    }
                    const S* src = &x.at(c, iy, 0);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[static_cast<size_t>(oy) * ow + ox] =
                            (ix >= 0 && ix < w) ? src[ix] : S(0);
                    }
                }
            }
}

template <class S>
void col2im_add(const Tensor<S>& col, int c_in, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor<S>& x_grad) {
    size_t r = 0;
    for (int c = 0; c < c_in; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, ++r) {
                const S* src = col.data.data() + r * static_cast<size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) x_grad.at(c, iy, ix) += src[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
}

}  // namespace detail

// x {C,H,W}, w {O,C,kh,kw}, b {O}. Output {O, OH, OW}.
template <class S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, int stride, int pad) {
    const auto& xv = x.val();
    const auto& wv = w.val();
    check(xv.rank() == 3 && wv.rank() == 4, ErrorKind::shape, "conv2d: bad ranks");
    check(wv.dim(1) == xv.dim(0), ErrorKind::shape, "conv2d: channel mismatch");
    const int c_in = xv.dim(0), h = xv.dim(1), win = xv.dim(2);
    const int c_out = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (win + 2 * pad - kw) / stride + 1;
    check(oh > 0 && ow > 0, ErrorKind::shape, "conv2d: empty output");
    const int k = c_in * kh * kw;
    const int npix = oh * ow;

    Tape<S>& t = *x.tape;
    auto col = std::make_shared<Tensor<S>>(std::vector<int>{k, npix});
    detail::im2col(xv, kh, kw, stride, pad, oh, ow, *col);

    Tensor<S> out({c_out, oh, ow});
    gemm(wv.data.data(), col->data.data(), out.data.data(), c_out, k, npix);
    for (int o = 0; o < c_out; ++o) {
        const S bo = b.val().data[static_cast<size_t>(o)];
        S* dst = out.data.data() + static_cast<size_t>(o) * npix;
        for (int i = 0; i < npix; ++i) dst[i] += bo;
    }

    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, w, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, wi = w.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [xi, wi, bi, yi, col, c_in, h, win, c_out, kh, kw, stride, pad, oh, ow,
                           k, npix](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;  // {O, OH, OW}
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (int o = 0; o < c_out; ++o) {
                    const S* src = gy.data.data() + static_cast<size_t>(o) * npix;
                    S acc = S(0);
                    for (int i = 0; i < npix; ++i) acc += src[i];
                    gb.data[static_cast<size_t>(o)] += acc;
                }
            }
            if (tp.node(wi).needs_grad) {
                // dW[O,k] = dY[O,npix] * col^T
                std::vector<S> scratch;
                gemm_bt_large(gy.data.data(), col->data.data(), tp.grad_ref(wi).data.data(), c_out,
                              npix, k, true, scratch);
            }
            if (tp.node(xi).needs_grad) {
                // dcol[k,npix] = W^T * dY, then scatter back
                Tensor<S> dcol({k, npix});
                gemm_at(tp.val(wi).data.data(), gy.data.data(), dcol.data.data(), k, c_out, npix,
                        false);
                detail::col2im_add(dcol, c_in, h, win, kh, kw, stride, pad, oh, ow,
                                   tp.grad_ref(xi));
            }
        };
    }
    return y;
}

// ---------------------------------------------------------- shape operations

template <class S>
Var<S> reshape(Var<S> a, std::vector<int> sh) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val().reshaped(sh);
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i];
        };
    }
    return y;
}

// {C,H,W} -> {H*W, C} (position-major rows)
template <class S>
Var<S> rows_from_chw(Var<S> a) {
    const auto& av = a.val();
    check(av.rank() == 3, ErrorKind::shape, "rows_from_chw: need {C,H,W}");
    const int c = av.dim(0), h = av.dim(1), w = av.dim(2), npix = h * w;
    Tape<S>& t = *a.tape;
    Tensor<S> out({npix, c});
    for (int ch = 0; ch < c; ++ch) {
        const S* src = av.data.data() + static_cast<size_t>(ch) * npix;
        for (int p = 0; p < npix; ++p) out.data[static_cast<size_t>(p) * c + ch] = src[p];
    }
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, c, npix](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (int ch = 0; ch < c; ++ch) {
                S* dst = ga.data.data() + static_cast<size_t>(ch) * npix;
                for (int p = 0; p < npix; ++p) dst[p] += gy.data[static_cast<size_t>(p) * c + ch];
            }
        };
    }
    return y;
}

// {H*W, C} -> {C,H,W}
template <class S>
Var<S> chw_from_rows(Var<S> a, int h, int w) {
    const auto& av = a.val();
    check(av.rank() == 2 && av.dim(0) == h * w, ErrorKind::shape, "chw_from_rows: bad shape");
    const int c = av.dim(1), npix = h * w;
    Tape<S>& t = *a.tape;
    Tensor<S> out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        S* dst = out.data.data() + static_cast<size_t>(ch) * npix;
        for (int p = 0; p < npix; ++p) dst[p] = av.data[static_cast<size_t>(p) * c + ch];
    }
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, c, npix](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (int ch = 0; ch < c; ++ch) {
                const S* src = gy.data.data() + static_cast<size_t>(ch) * npix;
                for (int p = 0; p < npix; ++p) ga.data[static_cast<size_t>(p) * c + ch] += src[p];
            }
        };
    }
    return y;
}

template <class S>
Var<S> concat_channels(Var<S> a, Var<S> b) {
    const auto& av = a.val();
    const auto& bv = b.val();
    check(av.rank() == 3 && bv.rank() == 3 && av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2),
          ErrorKind::shape, "concat_channels: spatial mismatch");
    const int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
    Tape<S>& t = *a.tape;
    Tensor<S> out({ca + cb, h, w});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.numel());
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        const size_t na = av.numel();
        t.node(yi).back = [ai, bi, yi, na](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < na; ++i) ga.data[i] += gy.data[i];
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < gb.numel(); ++i) gb.data[i] += gy.data[na + i];
            }
        };
    }
    return y;
}

// Stack L vectors of size D into {L,D}.
template <class S>
Var<S> stack_rows(const std::vector<Var<S>>& rows) {
    check(!rows.empty(), ErrorKind::shape, "stack_rows: empty");
    const int d = rows[0].val().dim(0);
    const int l = static_cast<int>(rows.size());
    Tape<S>& t = *rows[0].tape;
    Tensor<S> out({l, d});
    bool needs = false;
    std::vector<int> idxs;
    idxs.reserve(rows.size());
    for (int r = 0; r < l; ++r) {
        check(rows[static_cast<size_t>(r)].val().rank() == 1 &&
                  rows[static_cast<size_t>(r)].val().dim(0) == d,
              ErrorKind::shape, "stack_rows: inconsistent row size");
        std::copy(rows[static_cast<size_t>(r)].val().data.begin(),
                  rows[static_cast<size_t>(r)].val().data.end(),
                  out.data.begin() + static_cast<size_t>(r) * d);
        needs = needs || rows[static_cast<size_t>(r)].needs_grad();
        idxs.push_back(rows[static_cast<size_t>(r)].idx);
    }
    Var<S> y{&t, t.new_node(std::move(out), needs)};
    if (t.grad_enabled() && y.needs_grad()) {
        const int yi = y.idx;
        t.node(yi).back = [idxs, yi, d](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            for (size_t r = 0; r < idxs.size(); ++r) {
                if (!tp.node(idxs[r]).needs_grad) continue;
                auto& gr = tp.grad_ref(idxs[r]);
                for (int i = 0; i < d; ++i) gr.data[static_cast<size_t>(i)] += gy.data[r * d + i];
            }
        };
    }
    return y;
}

// Row r of {R,C} as a vector {C}.
template <class S>
Var<S> row_of(Var<S> m, int r) {
    const auto& mv = m.val();
    check(mv.rank() == 2 && r >= 0 && r < mv.dim(0), ErrorKind::range, "row_of: bad row");
    const int c = mv.dim(1);
    Tape<S>& t = *m.tape;
    Tensor<S> out({c});
    std::copy(mv.data.begin() + static_cast<size_t>(r) * c,
              mv.data.begin() + static_cast<size_t>(r + 1) * c, out.data.begin());
    Var<S> y{&t, t.new_node(std::move(out), m.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int mi = m.idx, yi = y.idx;
        t.node(yi).back = [mi, yi, r, c](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& gm = tp.grad_ref(mi);
            for (int i = 0; i < c; ++i) gm.data[static_cast<size_t>(r) * c + i] += gy.data[static_cast<size_t>(i)];
        };
    }
    return y;
}

template <class S>
Var<S> softplus(Var<S> a) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = a.val();
    for (auto& v : out.data)
        v = v > S(20) ? v : static_cast<S>(std::log1p(std::exp(static_cast<double>(v))));
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& av = tp.val(ai);
            auto& ga = tp.grad_ref(ai);
            for (size_t i = 0; i < gy.numel(); ++i) {
                const S s = S(1) / (S(1) + std::exp(-av.data[i]));
                ga.data[i] += gy.data[i] * s;
            }
        };
    }
    return y;
}

// ------------------------------------------------------------------ broadcast

// v {C} -> {C,H,W}
template <class S>
Var<S> broadcast_chan(Var<S> v, int h, int w) {
    const auto& vv = v.val();
    check(vv.rank() == 1, ErrorKind::shape, "broadcast_chan: need vector");
    const int c = vv.dim(0);
    Tape<S>& t = *v.tape;
    Tensor<S> out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        std::fill(out.data.begin() + static_cast<size_t>(ch) * h * w,
                  out.data.begin() + static_cast<size_t>(ch + 1) * h * w, vv.data[static_cast<size_t>(ch)]);
    Var<S> y{&t, t.new_node(std::move(out), v.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int vi = v.idx, yi = y.idx;
        const int npix = h * w;
        t.node(yi).back = [vi, yi, c, npix](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& gv = tp.grad_ref(vi);
            for (int ch = 0; ch < c; ++ch) {
                const S* src = gy.data.data() + static_cast<size_t>(ch) * npix;
                S acc = S(0);
                for (int i = 0; i < npix; ++i) acc += src[i];
                gv.data[static_cast<size_t>(ch)] += acc;
            }
        };
    }
    return y;
}

template <class S>
Var<S> upsample_nearest2(Var<S> a) {
    const auto& av = a.val();
    check(av.rank() == 3, ErrorKind::shape, "upsample_nearest2: need {C,H,W}");
    const int c = av.dim(0), h = av.dim(1), w = av.dim(2);
    Tape<S>& t = *a.tape;
    Tensor<S> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y0 = 0; y0 < h; ++y0)
            for (int x0 = 0; x0 < w; ++x0) {
                const S v = av.at(ch, y0, x0);
                out.at(ch, 2 * y0, 2 * x0) = v;
                out.at(ch, 2 * y0, 2 * x0 + 1) = v;
                out.at(ch, 2 * y0 + 1, 2 * x0) = v;
                out.at(ch, 2 * y0 + 1, 2 * x0 + 1) = v;
            }
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, c, h, w](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (int ch = 0; ch < c; ++ch)
                for (int y0 = 0; y0 < h; ++y0)
                    for (int x0 = 0; x0 < w; ++x0)
                        ga.at(ch, y0, x0) += gy.at(ch, 2 * y0, 2 * x0) +
                                             gy.at(ch, 2 * y0, 2 * x0 + 1) +
                                             gy.at(ch, 2 * y0 + 1, 2 * x0) +
                                             gy.at(ch, 2 * y0 + 1, 2 * x0 + 1);
        };
    }
    return y;
}

// -------------------------------------------------------------- normalization

// GroupNorm over {C,H,W}; gamma/beta {C}.
template <class S>
Var<S> group_norm(Var<S> x, Var<S> gamma, Var<S> beta, int groups, S eps = S(1e-5)) {
    const auto& xv = x.val();
    check(xv.rank() == 3 && xv.dim(0) % groups == 0, ErrorKind::shape, "group_norm: bad shape");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int cg = c / groups, gsize = cg * h * w;
    Tape<S>& t = *x.tape;

    auto xhat = std::make_shared<Tensor<S>>(std::vector<int>{c, h, w});
    auto inv_std = std::make_shared<Tensor<S>>(std::vector<int>{groups});
    Tensor<S> out({c, h, w});
    for (int g = 0; g < groups; ++g) {
        const S* src = xv.data.data() + static_cast<size_t>(g) * gsize;
        double mu = 0;
        for (int i = 0; i < gsize; ++i) mu += static_cast<double>(src[i]);
        mu /= gsize;
        double var = 0;
        for (int i = 0; i < gsize; ++i) {
            const double d = static_cast<double>(src[i]) - mu;
            var += d * d;
        }
        var /= gsize;
        const S istd = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std->data[static_cast<size_t>(g)] = istd;
        S* xh = xhat->data.data() + static_cast<size_t>(g) * gsize;
        S* dst = out.data.data() + static_cast<size_t>(g) * gsize;
        for (int i = 0; i < gsize; ++i) {
            xh[i] = static_cast<S>((static_cast<double>(src[i]) - mu) * istd);
            const int ch = g * cg + i / (h * w);
            dst[i] = gamma.val().data[static_cast<size_t>(ch)] * xh[i] + beta.val().data[static_cast<size_t>(ch)];
        }
    }
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, gamma, beta}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, gi = gamma.idx, bi = beta.idx, yi = y.idx;
        t.node(yi).back = [xi, gi, bi, yi, xhat, inv_std, groups, cg, h, w](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const int hw = h * w, gsize2 = cg * hw;
            const auto& gv = tp.val(gi);
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (int g = 0; g < groups; ++g)
                    for (int i = 0; i < gsize2; ++i) {
                        const int ch = g * cg + i / hw;
                        gb.data[static_cast<size_t>(ch)] += gy.data[static_cast<size_t>(g) * gsize2 + i];
                    }
            }
            if (tp.node(gi).needs_grad) {
                auto& gg = tp.grad_ref(gi);
                for (int g = 0; g < groups; ++g)
                    for (int i = 0; i < gsize2; ++i) {
                        const int ch = g * cg + i / hw;
                        const size_t k = static_cast<size_t>(g) * gsize2 + i;
                        gg.data[static_cast<size_t>(ch)] += gy.data[k] * xhat->data[k];
                    }
            }
            if (tp.node(xi).needs_grad) {
                auto& gx = tp.grad_ref(xi);
                for (int g = 0; g < groups; ++g) {
                    // dxhat = gy * gamma; dx = istd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    double m1 = 0, m2 = 0;
                    const size_t base = static_cast<size_t>(g) * gsize2;
                    for (int i = 0; i < gsize2; ++i) {
                        const int ch = g * cg + i / hw;
                        const double dxh = static_cast<double>(gy.data[base + i]) *
                                           static_cast<double>(gv.data[static_cast<size_t>(ch)]);
                        m1 += dxh;
                        m2 += dxh * static_cast<double>(xhat->data[base + i]);
                    }
                    m1 /= gsize2;
                    m2 /= gsize2;
                    const double istd = static_cast<double>(inv_std->data[static_cast<size_t>(g)]);
                    for (int i = 0; i < gsize2; ++i) {
                        const int ch = g * cg + i / hw;
                        const double dxh = static_cast<double>(gy.data[base + i]) *
                                           static_cast<double>(gv.data[static_cast<size_t>(ch)]);
                        gx.data[base + i] += static_cast<S>(
                            istd * (dxh - m1 - static_cast<double>(xhat->data[base + i]) * m2));
                    }
                }
            }
        };
    }
    return y;
}

// LayerNorm over the last axis of {N,D}; gamma/beta {D}.
template <class S>
Var<S> layer_norm_rows(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-5)) {
    const auto& xv = x.val();
    check(xv.rank() == 2, ErrorKind::shape, "layer_norm_rows: need {N,D}");
    const int n = xv.dim(0), d = xv.dim(1);
    Tape<S>& t = *x.tape;
    auto xhat = std::make_shared<Tensor<S>>(std::vector<int>{n, d});
    auto inv_std = std::make_shared<Tensor<S>>(std::vector<int>{n});
    Tensor<S> out({n, d});
    for (int r = 0; r < n; ++r) {
        const S* src = xv.data.data() + static_cast<size_t>(r) * d;
        double mu = 0;
        for (int i = 0; i < d; ++i) mu += static_cast<double>(src[i]);
        mu /= d;
        double var = 0;
        for (int i = 0; i < d; ++i) {
            const double dd = static_cast<double>(src[i]) - mu;
            var += dd * dd;
        }
        var /= d;
        const S istd = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std->data[static_cast<size_t>(r)] = istd;
        for (int i = 0; i < d; ++i) {
            const S xh = static_cast<S>((static_cast<double>(src[i]) - mu) * istd);
            xhat->data[static_cast<size_t>(r) * d + i] = xh;
            out.at(r, i) = gamma.val().data[static_cast<size_t>(i)] * xh + beta.val().data[static_cast<size_t>(i)];
        }
    }
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, gamma, beta}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, gi = gamma.idx, bi = beta.idx, yi = y.idx;
        t.node(yi).back = [xi, gi, bi, yi, xhat, inv_std, n, d](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& gv = tp.val(gi);
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (int r = 0; r < n; ++r)
                    for (int i = 0; i < d; ++i) gb.data[static_cast<size_t>(i)] += gy.at(r, i);
            }
            if (tp.node(gi).needs_grad) {
                auto& gg = tp.grad_ref(gi);
                for (int r = 0; r < n; ++r)
                    for (int i = 0; i < d; ++i)
                        gg.data[static_cast<size_t>(i)] += gy.at(r, i) * xhat->at(r, i);
            }
            if (tp.node(xi).needs_grad) {
                auto& gx = tp.grad_ref(xi);
                for (int r = 0; r < n; ++r) {
                    double m1 = 0, m2 = 0;
                    for (int i = 0; i < d; ++i) {
                        const double dxh = static_cast<double>(gy.at(r, i)) *
                                           static_cast<double>(gv.data[static_cast<size_t>(i)]);
                        m1 += dxh;
                        m2 += dxh * static_cast<double>(xhat->at(r, i));
                    }
                    m1 /= d;
                    m2 /= d;
                    const double istd = static_cast<double>(inv_std->data[static_cast<size_t>(r)]);
                    for (int i = 0; i < d; ++i) {
                        const double dxh = static_cast<double>(gy.at(r, i)) *
                                           static_cast<double>(gv.data[static_cast<size_t>(i)]);
                        gx.at(r, i) += static_cast<S>(
                            istd * (dxh - m1 - static_cast<double>(xhat->at(r, i)) * m2));
                    }
                }
            }
        };
    }
    return y;
}

// ------------------------------------------------------------------- softmax

template <class S>
Var<S> softmax_rows(Var<S> x) {
    const auto& xv = x.val();
    check(xv.rank() == 2, ErrorKind::shape, "softmax_rows: need {N,D}");
    const int n = xv.dim(0), d = xv.dim(1);
    Tape<S>& t = *x.tape;
    Tensor<S> out({n, d});
    for (int r = 0; r < n; ++r) {
        const S* src = xv.data.data() + static_cast<size_t>(r) * d;
        S mx = src[0];
        for (int i = 1; i < d; ++i) mx = std::max(mx, src[i]);
        double z = 0;
        S* dst = out.data.data() + static_cast<size_t>(r) * d;
        for (int i = 0; i < d; ++i) {
            dst[i] = std::exp(src[i] - mx);
            z += static_cast<double>(dst[i]);
        }
        const S iz = static_cast<S>(1.0 / z);
        for (int i = 0; i < d; ++i) dst[i] *= iz;
    }
    Var<S> y{&t, t.new_node(std::move(out), x.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, yi = y.idx;
        t.node(yi).back = [xi, yi, n, d](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const auto& yv = tp.val(yi);
            auto& gx = tp.grad_ref(xi);
            for (int r = 0; r < n; ++r) {
                double dot = 0;
                for (int i = 0; i < d; ++i)
                    dot += static_cast<double>(gy.at(r, i)) * static_cast<double>(yv.at(r, i));
                for (int i = 0; i < d; ++i)
                    gx.at(r, i) += (gy.at(r, i) - static_cast<S>(dot)) * yv.at(r, i);
            }
        };
    }
    return y;
}

// ------------------------------------------------------------------ gathers

// table {V,D} (usually a param), ids constant -> {S,D}
template <class S>
Var<S> embedding_rows(Var<S> table, const std::vector<int>& ids) {
    const auto& tv = table.val();
    check(tv.rank() == 2, ErrorKind::shape, "embedding_rows: need {V,D}");
    const int v = tv.dim(0), d = tv.dim(1);
    Tape<S>& t = *table.tape;
    Tensor<S> out({static_cast<int>(ids.size()), d});
    for (size_t r = 0; r < ids.size(); ++r) {
        check(ids[r] >= 0 && ids[r] < v, ErrorKind::range, "embedding id out of range");
        std::copy(tv.data.begin() + static_cast<size_t>(ids[r]) * d,
                  tv.data.begin() + static_cast<size_t>(ids[r] + 1) * d,
                  out.data.begin() + r * d);
    }
    Var<S> y{&t, t.new_node(std::move(out), table.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ti = table.idx, yi = y.idx;
        t.node(yi).back = [ti, yi, ids, d](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& gt = tp.grad_ref(ti);
            for (size_t r = 0; r < ids.size(); ++r)
                for (int i = 0; i < d; ++i)
                    gt.data[static_cast<size_t>(ids[r]) * d + i] += gy.data[r * d + i];
        };
    }
    return y;
}

// ----------------------------------------------------------------- reductions

template <class S>
Var<S> sum_all(Var<S> a) {
    Tape<S>& t = *a.tape;
    double s = 0;
    for (S v : a.val().data) s += static_cast<double>(v);
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(s);
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0];
            auto& ga = tp.grad_ref(ai);
            for (auto& v : ga.data) v += g;
        };
    }
    return y;
}

template <class S>
Var<S> mean_all(Var<S> a) {
    const S n = static_cast<S>(a.val().numel());
    return scale(sum_all(a), S(1) / n);
}

template <class S>
Var<S> global_avg_pool(Var<S> a) {
    const auto& av = a.val();
    check(av.rank() == 3, ErrorKind::shape, "global_avg_pool: need {C,H,W}");
    const int c = av.dim(0), npix = av.dim(1) * av.dim(2);
    Tape<S>& t = *a.tape;
    Tensor<S> out({c});
    for (int ch = 0; ch < c; ++ch) {
        const S* src = av.data.data() + static_cast<size_t>(ch) * npix;
        double acc = 0;
        for (int i = 0; i < npix; ++i) acc += static_cast<double>(src[i]);
        out.data[static_cast<size_t>(ch)] = static_cast<S>(acc / npix);
    }
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi, c, npix](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            auto& ga = tp.grad_ref(ai);
            for (int ch = 0; ch < c; ++ch) {
                const S g = gy.data[static_cast<size_t>(ch)] / static_cast<S>(npix);
                S* dst = ga.data.data() + static_cast<size_t>(ch) * npix;
                for (int i = 0; i < npix; ++i) dst[i] += g;
            }
        };
    }
    return y;
}

template <class S>
Var<S> dot(Var<S> a, Var<S> b) {
    check(a.val().numel() == b.val().numel(), ErrorKind::shape, "dot: size mismatch");
    Tape<S>& t = *a.tape;
    double s = 0;
    for (size_t i = 0; i < a.val().numel(); ++i)
        s += static_cast<double>(a.val().data[i]) * static_cast<double>(b.val().data[i]);
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(s);
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0];
            const auto& av = tp.val(ai);
            const auto& bv = tp.val(bi);
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g * bv.data[i];
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < gb.numel(); ++i) gb.data[i] += g * av.data[i];
            }
        };
    }
    return y;
}

// Vector 2-norm of the flattened tensor: sqrt(sum x^2). Gradient defined as 0
// at the origin.
template <class S>
Var<S> l2_norm(Var<S> a) {
    Tape<S>& t = *a.tape;
    double s = 0;
    for (S v : a.val().data) s += static_cast<double>(v) * static_cast<double>(v);
    const double nrm = std::sqrt(s);
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(nrm);
    Var<S> y{&t, t.new_node(std::move(out), a.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, yi = y.idx;
        t.node(yi).back = [ai, yi](Tape<S>& tp) {
            const double nv = static_cast<double>(tp.val(yi).data[0]);
            if (nv <= 0) return;
            const S g = tp.node(yi).grad.data[0];
            const auto& av = tp.val(ai);
            auto& ga = tp.grad_ref(ai);
            const S inv = static_cast<S>(1.0 / nv);
            for (size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g * av.data[i] * inv;
        };
    }
    return y;
}

// x * s with s shape {1}, broadcast over all of x.
template <class S>
Var<S> mul_scalar_var(Var<S> x, Var<S> s) {
    check(s.val().numel() == 1, ErrorKind::shape, "mul_scalar_var: s must be scalar");
    Tape<S>& t = *x.tape;
    const S sv = s.val().data[0];
    Tensor<S> out = x.val();
    for (auto& v : out.data) v *= sv;
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({x, s}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int xi = x.idx, si = s.idx, yi = y.idx;
        t.node(yi).back = [xi, si, yi](Tape<S>& tp) {
            const auto& gy = tp.node(yi).grad;
            const S sv2 = tp.val(si).data[0];
            const auto& xv = tp.val(xi);
            if (tp.node(xi).needs_grad) {
                auto& gx = tp.grad_ref(xi);
                for (size_t i = 0; i < gy.numel(); ++i) gx.data[i] += gy.data[i] * sv2;
            }
            if (tp.node(si).needs_grad) {
                double acc = 0;
                for (size_t i = 0; i < gy.numel(); ++i)
                    acc += static_cast<double>(gy.data[i]) * static_cast<double>(xv.data[i]);
                tp.grad_ref(si).data[0] += static_cast<S>(acc);
            }
        };
    }
    return y;
}

// Scalar divide: a/b with a,b shape {1}.
template <class S>
Var<S> div_scalar(Var<S> a, Var<S> b) {
    check(a.val().numel() == 1 && b.val().numel() == 1, ErrorKind::shape, "div_scalar: scalars only");
    Tape<S>& t = *a.tape;
    Tensor<S> out({1});
    out.data[0] = a.val().data[0] / b.val().data[0];
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0];
            const S av = tp.val(ai).data[0], bv = tp.val(bi).data[0];
            if (tp.node(ai).needs_grad) tp.grad_ref(ai).data[0] += g / bv;
            if (tp.node(bi).needs_grad) tp.grad_ref(bi).data[0] -= g * av / (bv * bv);
        };
    }
    return y;
}

// Cosine similarity of two flattened tensors, with an epsilon floor on the
// norms so the gradient stays finite.
template <class S>
Var<S> cosine(Var<S> a, Var<S> b, S eps = S(1e-12)) {
    auto na = add_const(l2_norm(a), eps);
    auto nb = add_const(l2_norm(b), eps);
    return div_scalar(div_scalar(dot(a, b), na), nb);
}

// 1 - cos(a, b) computed as 0.5*||a/|a| - b/|b|||^2. Algebraically identical,
// but bit-identical inputs give exactly zero, which the loss fixed points
// rely on.
template <class S>
Var<S> one_minus_cosine(Var<S> a, Var<S> b, S eps = S(1e-12)) {
    check(a.val().numel() == b.val().numel(), ErrorKind::shape, "one_minus_cosine: size mismatch");
    auto inv_norm = [eps](Var<S> x) {
        Tape<S>& t = *x.tape;
        auto one = constant(t, Tensor<S>::full({1}, S(1)));
        return div_scalar(one, add_const(l2_norm(x), eps));
    };
    auto an = mul_scalar_var(a, inv_norm(a));
    auto bn = mul_scalar_var(b, inv_norm(b));
    auto d = sub(an, bn);
    return scale(dot(d, d), S(0.5));
}

// Fused mean squared error over the flattened tensors.
template <class S>
Var<S> mse(Var<S> a, Var<S> b) {
    check(a.val().same_shape(b.val()), ErrorKind::shape, "mse: shape mismatch");
    Tape<S>& t = *a.tape;
    const size_t n = a.val().numel();
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.val().data[i]) - static_cast<double>(b.val().data[i]);
        s += d * d;
    }
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(s / static_cast<double>(n));
    Var<S> y{&t, t.new_node(std::move(out), detail::any_needs<S>({a, b}))};
    if (t.grad_enabled() && y.needs_grad()) {
        const int ai = a.idx, bi = b.idx, yi = y.idx;
        t.node(yi).back = [ai, bi, yi, n](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0] * S(2) / static_cast<S>(n);
            const auto& av = tp.val(ai);
            const auto& bv = tp.val(bi);
            if (tp.node(ai).needs_grad) {
                auto& ga = tp.grad_ref(ai);
                for (size_t i = 0; i < n; ++i) ga.data[i] += g * (av.data[i] - bv.data[i]);
            }
            if (tp.node(bi).needs_grad) {
                auto& gb = tp.grad_ref(bi);
                for (size_t i = 0; i < n; ++i) gb.data[i] -= g * (av.data[i] - bv.data[i]);
            }
        };
    }
    return y;
}

// Softmax cross-entropy from logits {C} against one target class.
template <class S>
Var<S> cross_entropy_logits(Var<S> logits, int target) {
    const auto& lv = logits.val();
    check(lv.rank() == 1, ErrorKind::shape, "cross_entropy_logits: need vector");
    const int c = lv.dim(0);
    check(target >= 0 && target < c, ErrorKind::range, "cross_entropy_logits: bad target");
    Tape<S>& t = *logits.tape;
    S mx = lv.data[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, lv.data[static_cast<size_t>(i)]);
    double z = 0;
    for (int i = 0; i < c; ++i) z += std::exp(static_cast<double>(lv.data[static_cast<size_t>(i)] - mx));
    const double logz = std::log(z) + static_cast<double>(mx);
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(logz - static_cast<double>(lv.data[static_cast<size_t>(target)]));
    Var<S> y{&t, t.new_node(std::move(out), logits.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int li = logits.idx, yi = y.idx;
        t.node(yi).back = [li, yi, c, target, logz](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0];
            const auto& lv2 = tp.val(li);
            auto& gl = tp.grad_ref(li);
            for (int i = 0; i < c; ++i) {
                const S p = static_cast<S>(std::exp(static_cast<double>(lv2.data[static_cast<size_t>(i)]) - logz));
                gl.data[static_cast<size_t>(i)] += g * (p - (i == target ? S(1) : S(0)));
            }
        };
    }
    return y;
}

// Mean per-pixel softmax cross-entropy for segmentation. logits {C,H,W}.
template <class S>
Var<S> pixel_cross_entropy(Var<S> logits, const MaskImage& labels) {
    const auto& lv = logits.val();
    check(lv.rank() == 3 && lv.dim(1) == labels.h && lv.dim(2) == labels.w, ErrorKind::shape,
          "pixel_cross_entropy: shape mismatch");
    const int c = lv.dim(0), npix = labels.h * labels.w;
    Tape<S>& t = *logits.tape;
    auto probs = std::make_shared<Tensor<S>>(std::vector<int>{c, labels.h, labels.w});
    double loss = 0;
    for (int p = 0; p < npix; ++p) {
        S mx = lv.data[static_cast<size_t>(p)];
        for (int ch = 1; ch < c; ++ch)
            mx = std::max(mx, lv.data[static_cast<size_t>(ch) * npix + p]);
        double z = 0;
        for (int ch = 0; ch < c; ++ch)
            z += std::exp(static_cast<double>(lv.data[static_cast<size_t>(ch) * npix + p] - mx));
        const double logz = std::log(z) + static_cast<double>(mx);
        const int lab = labels.labels[static_cast<size_t>(p)];
        check(lab < c, ErrorKind::range, "pixel_cross_entropy: label out of range");
        loss += logz - static_cast<double>(lv.data[static_cast<size_t>(lab) * npix + p]);
        for (int ch = 0; ch < c; ++ch)
            probs->data[static_cast<size_t>(ch) * npix + p] = static_cast<S>(
                std::exp(static_cast<double>(lv.data[static_cast<size_t>(ch) * npix + p]) - logz));
    }
    Tensor<S> out({1});
    out.data[0] = static_cast<S>(loss / npix);
    Var<S> y{&t, t.new_node(std::move(out), logits.needs_grad())};
    if (t.grad_enabled() && y.needs_grad()) {
        const int li = logits.idx, yi = y.idx;
        const MaskImage lab = labels;
        t.node(yi).back = [li, yi, probs, lab, c, npix](Tape<S>& tp) {
            const S g = tp.node(yi).grad.data[0] / static_cast<S>(npix);
            auto& gl = tp.grad_ref(li);
            for (int p = 0; p < npix; ++p)
                for (int ch = 0; ch < c; ++ch) {
                    const S onehot = (ch == lab.labels[static_cast<size_t>(p)]) ? S(1) : S(0);
                    gl.data[static_cast<size_t>(ch) * npix + p] +=
                        g * (probs->data[static_cast<size_t>(ch) * npix + p] - onehot);
                }
        };
    }
    return y;
}

}  // namespace lb
