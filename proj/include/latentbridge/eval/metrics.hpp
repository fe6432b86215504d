// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "latentbridge/core/tensor.hpp"

namespace lb::eval {

// Metric constants, echoed into every report header for auditability.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kMsSsimScales = 3;
inline constexpr double kFrechetEps = 1e-6;  // covariance regularization

inline double pixel_accuracy(const MaskImage& pred, const MaskImage& gt) {
    check(pred.h == gt.h && pred.w == gt.w, ErrorKind::shape, "pixel_accuracy: shape mismatch");
    size_t hits = 0;
    for (size_t i = 0; i < gt.numel(); ++i) hits += pred.labels[i] == gt.labels[i];
    return static_cast<double>(hits) / static_cast<double>(gt.numel());
}

// Mean IoU over classes present in either mask; classes absent from both are
// excluded from the mean.
inline double miou(const MaskImage& pred, const MaskImage& gt, int n_classes) {
    check(pred.h == gt.h && pred.w == gt.w, ErrorKind::shape, "miou: shape mismatch");
    std::vector<size_t> inter(static_cast<size_t>(n_classes), 0);
    std::vector<size_t> uni(static_cast<size_t>(n_classes), 0);
    for (size_t i = 0; i < gt.numel(); ++i) {
        const int p = pred.labels[i], g = gt.labels[i];
        check(p < n_classes && g < n_classes, ErrorKind::validation, "miou: label out of range");
        if (p == g) {
            ++inter[static_cast<size_t>(g)];
            ++uni[static_cast<size_t>(g)];
        } else {
            ++uni[static_cast<size_t>(p)];
            ++uni[static_cast<size_t>(g)];
        }
    }
    double sum = 0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (uni[static_cast<size_t>(c)] == 0) continue;
        sum += static_cast<double>(inter[static_cast<size_t>(c)]) /
               static_cast<double>(uni[static_cast<size_t>(c)]);
        ++present;
    }
    check(present > 0, ErrorKind::validation, "miou: empty masks");
    return sum / present;
}

namespace detail {

inline std::vector<double> gaussian_kernel(int n, double sigma) {
    std::vector<double> k(static_cast<size_t>(n));
    const double c = (n - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
        sum += k[static_cast<size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// One channel plane, values already in [0,1].
inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h,
                         int w) {
    const auto k = gaussian_kernel(kSsimWindow, kSsimSigma);
    const int r = kSsimWindow / 2;
    const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
    double total = 0;
    size_t windows = 0;
    for (int y = r; y < h - r; ++y)
        for (int x = r; x < w - r; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double wgt = k[static_cast<size_t>(dy + r)] * k[static_cast<size_t>(dx + r)];
                    const double va = a[static_cast<size_t>(y + dy) * w + (x + dx)];
                    const double vb = b[static_cast<size_t>(y + dy) * w + (x + dx)];
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * (va * va);
                    sbb += wgt * (vb * vb);
                    sab += wgt * (va * vb);  // argument-order symmetric
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    check(windows > 0, ErrorKind::validation, "ssim: image smaller than the window");
    return total / static_cast<double>(windows);
}

inline std::vector<double> to_unit(const TensorF& img, int c) {
    const int n = img.dim(1) * img.dim(2);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] =
            (static_cast<double>(img.data[static_cast<size_t>(c) * n + i]) + 1.0) / 2.0;
    return out;
}

inline std::vector<double> avg_pool2(const std::vector<double>& a, int h, int w) {
    std::vector<double> out(static_cast<size_t>(h / 2) * (w / 2));
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
            out[static_cast<size_t>(y) * (w / 2) + x] =
                (a[static_cast<size_t>(2 * y) * w + 2 * x] + a[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                 a[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                 a[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1]) /
                4.0;
    return out;
}

}  // namespace detail

// Channel-averaged SSIM, 11x11 Gaussian window, valid positions only; inputs
// in [-1,1] are remapped to [0,1].
inline double ssim(const TensorF& a, const TensorF& b) {
    check(a.same_shape(b), ErrorKind::shape, "ssim: shape mismatch");
    check(a.rank() == 3, ErrorKind::shape, "ssim: need {C,H,W}");
    check(a.dim(1) >= kSsimWindow && a.dim(2) >= kSsimWindow, ErrorKind::validation,
          "ssim: image smaller than the window");
    double acc = 0;
    for (int c = 0; c < a.dim(0); ++c)
        acc += detail::ssim_plane(detail::to_unit(a, c), detail::to_unit(b, c), a.dim(1), a.dim(2));
    return acc / a.dim(0);
}

// Mean SSIM over 3 dyadic scales with equal weights (64 -> 32 -> 16).
inline double ms_ssim(const TensorF& a, const TensorF& b) {
    check(a.same_shape(b), ErrorKind::shape, "ms_ssim: shape mismatch");
    check(a.dim(1) >> (kMsSsimScales - 1) >= kSsimWindow &&
              a.dim(2) >> (kMsSsimScales - 1) >= kSsimWindow,
          ErrorKind::validation, "ms_ssim: image too small for 3 scales");
    double acc = 0;
    for (int c = 0; c < a.dim(0); ++c) {
        auto pa = detail::to_unit(a, c);
        auto pb = detail::to_unit(b, c);
        int h = a.dim(1), w = a.dim(2);
        for (int s = 0; s < kMsSsimScales; ++s) {
            acc += detail::ssim_plane(pa, pb, h, w);
            if (s + 1 < kMsSsimScales) {
                pa = detail::avg_pool2(pa, h, w);
                pb = detail::avg_pool2(pb, h, w);
                h /= 2;
                w /= 2;
            }
        }
    }
    return acc / (a.dim(0) * kMsSsimScales);
}

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Deterministic sweep order; returns eigenvalues and orthonormal columns in v.
inline void jacobi_eigen(std::vector<double>& m, int n, std::vector<double>& eigvals,
                         std::vector<double>& v) {
    v.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    auto at = [&](std::vector<double>& a, int r, int c) -> double& {
        return a[static_cast<size_t>(r) * n + c];
    };
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(m, p, q) * at(m, p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(m, p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(m, q, q) - at(m, p, p)) / (2 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double mkp = at(m, k, p), mkq = at(m, k, q);
                    at(m, k, p) = c * mkp - s * mkq;
                    at(m, k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = at(m, p, k), mqk = at(m, q, k);
                    at(m, p, k) = c * mpk - s * mqk;
                    at(m, q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = at(v, k, p), vkq = at(v, k, q);
                    at(v, k, p) = c * vkp - s * vkq;
                    at(v, k, q) = s * vkp + c * vkq;
                }
            }
    }
    eigvals.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eigvals[static_cast<size_t>(i)] = at(m, i, i);
}

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped at zero.
inline std::vector<double> sqrtm_psd(std::vector<double> m, int n) {
    std::vector<double> eig, v;
    jacobi_eigen(m, n, eig, v);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double s = std::sqrt(std::max(0.0, eig[static_cast<size_t>(k)]));
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] +=
                    s * v[static_cast<size_t>(i) * n + k] * v[static_cast<size_t>(j) * n + k];
    }
    return out;
}

inline std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
    std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[static_cast<size_t>(i) * n + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j)
                c[static_cast<size_t>(i) * n + j] += aik * b[static_cast<size_t>(k) * n + j];
        }
    return c;
}

struct Moments {
    std::vector<double> mean;
    std::vector<double> cov;  // population (1/N) covariance
    int dim = 0;
};

// Sample order must not matter, so samples are accumulated in a canonical
// (lexicographically sorted) order.
inline Moments moments_of_sorted(std::vector<std::vector<double>> feats) {
    std::sort(feats.begin(), feats.end());
    Moments m;
    const int n = static_cast<int>(feats.size());
    m.dim = static_cast<int>(feats[0].size());
    m.mean.assign(static_cast<size_t>(m.dim), 0.0);
    for (const auto& f : feats)
        for (int j = 0; j < m.dim; ++j) m.mean[static_cast<size_t>(j)] += f[static_cast<size_t>(j)];
    for (auto& v : m.mean) v /= n;
    m.cov.assign(static_cast<size_t>(m.dim) * m.dim, 0.0);
    for (const auto& f : feats)
        for (int i = 0; i < m.dim; ++i) {
            const double di = f[static_cast<size_t>(i)] - m.mean[static_cast<size_t>(i)];
            for (int j = 0; j < m.dim; ++j)
                m.cov[static_cast<size_t>(i) * m.dim + j] +=
                    di * (f[static_cast<size_t>(j)] - m.mean[static_cast<size_t>(j)]);
        }
    for (auto& v : m.cov) v /= n;
    return m;
}

}  // namespace detail

// 2-Wasserstein distance between Gaussians fitted to the two feature sets:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sb^1/2 Sa Sb^1/2)^1/2), with eps*I added
// to both covariances before the square roots.
inline double frechet_distance(const std::vector<std::vector<double>>& feats_a,
                               const std::vector<std::vector<double>>& feats_b) {
    check(!feats_a.empty() && !feats_b.empty(), ErrorKind::validation,
          "frechet_distance: empty feature set");
    const auto ma = detail::moments_of_sorted(feats_a);
    const auto mb = detail::moments_of_sorted(feats_b);
    check(ma.dim == mb.dim, ErrorKind::shape, "frechet_distance: dim mismatch");
    const int n = ma.dim;

    std::vector<double> sa = ma.cov, sb = mb.cov;
    for (int i = 0; i < n; ++i) {
        sa[static_cast<size_t>(i) * n + i] += kFrechetEps;
        sb[static_cast<size_t>(i) * n + i] += kFrechetEps;
    }

    const auto sb_half = detail::sqrtm_psd(sb, n);
    auto inner = detail::matmul_sq(detail::matmul_sq(sb_half, sa, n), sb_half, n);
    // symmetrize before the final square root
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (inner[static_cast<size_t>(i) * n + j] +
                                    inner[static_cast<size_t>(j) * n + i]);
            inner[static_cast<size_t>(i) * n + j] = s;
            inner[static_cast<size_t>(j) * n + i] = s;
        }
    std::vector<double> eig, v;
    detail::jacobi_eigen(inner, n, eig, v);

    double mean_term = 0;
    for (int i = 0; i < n; ++i) {
        const double d = ma.mean[static_cast<size_t>(i)] - mb.mean[static_cast<size_t>(i)];
        mean_term += d * d;
    }
    double tr = 0;
    for (int i = 0; i < n; ++i)
        tr += sa[static_cast<size_t>(i) * n + i] + sb[static_cast<size_t>(i) * n + i];
    double tr_sqrt = 0;
    for (double e : eig) tr_sqrt += std::sqrt(std::max(0.0, e));
    return std::max(0.0, mean_term + tr - 2.0 * tr_sqrt);
}

}  // namespace lb::eval
