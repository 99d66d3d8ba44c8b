#pragma once

// Differentiable building blocks. Convolutions run as im2col + GEMM (Eigen);
// the stride-2 kernel-2 transposed convolution is a GEMM plus a scatter that
// never overlaps, so forward and backward stay exact permutations.
//
// Determinism: loops parallelized with OpenMP write disjoint regions with a
// static schedule and all reductions run in a fixed order, so results are
// bitwise reproducible for a fixed build and thread count.

#include <Eigen/Core>

#include <cmath>
#include <memory>

#include "banet/model/autograd.hpp"
#include "banet/model/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace banet {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// C (m x n) = or += A (m x k) * B (k x n); A/B optionally transposed views.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k,
          std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
    Eigen::Map<EMat<T>> C(c, m, n);
    auto run = [&](const auto& A, const auto& B) {
        if (accumulate)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
    };
    if (!trans_a && !trans_b) {
        Eigen::Map<const EMat<T>> A(a, m, k), B(b, k, n);
        run(A, B);
    } else if (trans_a && !trans_b) {
        Eigen::Map<const EMat<T>> A(a, k, m), B(b, k, n);
        run(A.transpose(), B);
    } else if (!trans_a && trans_b) {
        Eigen::Map<const EMat<T>> A(a, m, k), B(b, n, k);
        run(A, B.transpose());
    } else {
        Eigen::Map<const EMat<T>> A(a, k, m), B(b, n, k);
        run(A.transpose(), B.transpose());
    }
}

struct ConvGeom {
    std::int64_t in_ch = 0;
    std::int64_t out_ch = 0;
    std::int64_t kernel = 3;
    std::int64_t stride = 1;
    std::int64_t pad = 1;

    std::int64_t out_dim(std::int64_t in) const {
        return (in + 2 * pad - kernel) / stride + 1;
    }
    std::int64_t patch_len() const { return in_ch * kernel * kernel * kernel; }
};

namespace detail {

// Scratch buffer without zero-initialization (im2col overwrites every slot).
template <typename T>
struct Scratch {
    std::unique_ptr<T[]> p;
    explicit Scratch(std::int64_t n) : p(new T[static_cast<std::size_t>(n)]) {}
    T* get() { return p.get(); }
};

template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t D, std::int64_t H,
            std::int64_t W, const ConvGeom& g, std::int64_t od, std::int64_t oh,
            std::int64_t ow, T* col) {
    const std::int64_t k = g.kernel, s = g.stride, p = g.pad;
    const std::int64_t rows = C * k * k * k;
    const std::int64_t cols = od * oh * ow;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t ci = r / (k * k * k);
        const std::int64_t rem = r % (k * k * k);
        const std::int64_t kz = rem / (k * k);
        const std::int64_t ky = (rem / k) % k;
        const std::int64_t kx = rem % k;
        const T* src = x + ci * D * H * W;
        T* dst = col + r * cols;
        for (std::int64_t oz = 0; oz < od; ++oz) {
            const std::int64_t z = oz * s - p + kz;
            if (z < 0 || z >= D) {
                std::fill(dst, dst + oh * ow, T(0));
                dst += oh * ow;
                continue;
            }
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t y = oy * s - p + ky;
                if (y < 0 || y >= H) {
                    std::fill(dst, dst + ow, T(0));
                    dst += ow;
                    continue;
                }
                const T* row = src + (z * H + y) * W;
                if (s == 1) {
                    const std::int64_t off = kx - p;
                    std::int64_t lo = std::max<std::int64_t>(0, -off);
                    std::int64_t hi = std::min<std::int64_t>(ow, W - off);
                    for (std::int64_t ox = 0; ox < lo; ++ox) dst[ox] = T(0);
                    for (std::int64_t ox = lo; ox < hi; ++ox)
                        dst[ox] = row[ox + off];
                    for (std::int64_t ox = hi; ox < ow; ++ox) dst[ox] = T(0);
                } else {
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const std::int64_t xx = ox * s - p + kx;
                        dst[ox] = (xx >= 0 && xx < W) ? row[xx] : T(0);
                    }
                }
                dst += ow;
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, std::int64_t C, std::int64_t D, std::int64_t H,
                std::int64_t W, const ConvGeom& g, std::int64_t od,
                std::int64_t oh, std::int64_t ow, T* dx) {
    const std::int64_t k = g.kernel, s = g.stride, p = g.pad;
    const std::int64_t cols = od * oh * ow;
    // One thread owns all k^3 rows of a channel: scatter targets stay disjoint.
#pragma omp parallel for schedule(static)
    for (std::int64_t ci = 0; ci < C; ++ci) {
        T* dst = dx + ci * D * H * W;
        for (std::int64_t rem = 0; rem < k * k * k; ++rem) {
            const std::int64_t kz = rem / (k * k);
            const std::int64_t ky = (rem / k) % k;
            const std::int64_t kx = rem % k;
            const T* src = col + (ci * k * k * k + rem) * cols;
            for (std::int64_t oz = 0; oz < od; ++oz) {
                const std::int64_t z = oz * s - p + kz;
                if (z < 0 || z >= D) continue;
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t y = oy * s - p + ky;
                    if (y < 0 || y >= H) continue;
                    const T* srow = src + (oz * oh + oy) * ow;
                    T* drow = dst + (z * H + y) * W;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const std::int64_t xx = ox * s - p + kx;
                        if (xx >= 0 && xx < W) drow[xx] += srow[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution. Weight layout (out_ch, in_ch*k^3) row-major, bias (out_ch).

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, const ConvGeom& g) {
    if (x.c() != g.in_ch)
        throw Error("conv3d: input channels " + std::to_string(x.c()) +
                    " != expected " + std::to_string(g.in_ch));
    const std::int64_t od = g.out_dim(x.d()), oh = g.out_dim(x.h()),
                       ow = g.out_dim(x.w());
    if (od < 1 || oh < 1 || ow < 1)
        throw Error("conv3d: input " + x.shape_str() + " too small for kernel");
    Tensor<T> y(x.n(), g.out_ch, od, oh, ow);
    const std::int64_t cols = od * oh * ow;
    detail::Scratch<T> col(g.patch_len() * cols);
    for (std::int64_t n = 0; n < x.n(); ++n) {
        detail::im2col(x.at(n, 0), x.c(), x.d(), x.h(), x.w(), g, od, oh, ow,
                       col.get());
        gemm(w.ptr(), col.get(), y.at(n, 0), g.out_ch, g.patch_len(), cols,
             false, false, false);
#pragma omp parallel for schedule(static)
        for (std::int64_t c = 0; c < g.out_ch; ++c) {
            T* yc = y.at(n, c);
            const T bc = b.ptr()[c];
            for (std::int64_t i = 0; i < cols; ++i) yc[i] += bc;
        }
    }
    return y;
}

template <typename T>
Var<T> conv3d(Tape<T>* tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
              const ConvGeom& g) {
    Var<T> y(conv3d_forward(x.value(), w.value(), b.value(), g),
             x.requires_grad() || w.requires_grad());
    if (tape && y.requires_grad()) {
        auto xs = x, ws = w, bs = b, ys = y;
        tape->push([xs, ws, bs, ys, g]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const Tensor<T>& xv = xs.value();
            const std::int64_t od = dy->d(), oh = dy->h(), ow = dy->w();
            const std::int64_t cols = od * oh * ow;
            detail::Scratch<T> col(g.patch_len() * cols);
            const bool need_dx = xs.requires_grad();
            detail::Scratch<T> dcol(need_dx ? g.patch_len() * cols : 1);
            for (std::int64_t n = 0; n < xv.n(); ++n) {
                if (ws.requires_grad()) {
                    detail::im2col(xv.at(n, 0), xv.c(), xv.d(), xv.h(), xv.w(),
                                   g, od, oh, ow, col.get());
                    gemm(dy->at(n, 0), col.get(), ws.grad().ptr(), g.out_ch,
                         cols, g.patch_len(), false, true, true);
                    T* db = bs.grad().ptr();
#pragma omp parallel for schedule(static)
                    for (std::int64_t c = 0; c < g.out_ch; ++c) {
                        const T* dyc = dy->at(n, c);
                        double s = 0;
                        for (std::int64_t i = 0; i < cols; ++i) s += dyc[i];
                        db[c] += static_cast<T>(s);
                    }
                }
                if (need_dx) {
                    gemm(ws.value().ptr(), dy->at(n, 0), dcol.get(),
                         g.patch_len(), g.out_ch, cols, true, false, false);
                    detail::col2im_add(dcol.get(), xv.c(), xv.d(), xv.h(),
                                       xv.w(), g, od, oh, ow, xs.grad().at(n, 0));
                }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Transposed convolution, kernel 2 stride 2 (exact 2x upsampling).
// Weight layout (in_ch, out_ch*8) row-major; offset index is
// (kz*2+ky)*2+kx nested inside each output channel.

template <typename T>
Tensor<T> tconv2x_forward(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& b, std::int64_t in_ch,
                          std::int64_t out_ch) {
    if (x.c() != in_ch) throw Error("tconv2x: channel mismatch");
    const std::int64_t D = x.d(), H = x.h(), W = x.w();
    Tensor<T> y(x.n(), out_ch, D * 2, H * 2, W * 2);
    const std::int64_t oin = D * H * W;
    detail::Scratch<T> col(out_ch * 8 * oin);
    for (std::int64_t n = 0; n < x.n(); ++n) {
        gemm(w.ptr(), x.at(n, 0), col.get(), out_ch * 8, in_ch, oin, true,
             false, false);
#pragma omp parallel for schedule(static)
        for (std::int64_t co = 0; co < out_ch; ++co) {
            T* yc = y.at(n, co);
            const T bc = b.ptr()[co];
            for (std::int64_t off = 0; off < 8; ++off) {
                const std::int64_t kz = off >> 2, ky = (off >> 1) & 1,
                                   kx = off & 1;
                const T* src = col.get() + (co * 8 + off) * oin;
                for (std::int64_t z = 0; z < D; ++z)
                    for (std::int64_t yy = 0; yy < H; ++yy) {
                        const T* srow = src + (z * H + yy) * W;
                        T* drow = yc + ((2 * z + kz) * 2 * H + 2 * yy + ky) *
                                      2 * W + kx;
                        for (std::int64_t xx = 0; xx < W; ++xx)
                            drow[2 * xx] = srow[xx] + bc;
                    }
            }
        }
    }
    return y;
}

template <typename T>
Var<T> tconv2x(Tape<T>* tape, const Var<T>& x, const Var<T>& w, const Var<T>& b,
               std::int64_t in_ch, std::int64_t out_ch) {
    Var<T> y(tconv2x_forward(x.value(), w.value(), b.value(), in_ch, out_ch),
             x.requires_grad() || w.requires_grad());
    if (tape && y.requires_grad()) {
        auto xs = x, ws = w, bs = b, ys = y;
        tape->push([xs, ws, bs, ys, in_ch, out_ch]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const Tensor<T>& xv = xs.value();
            const std::int64_t D = xv.d(), H = xv.h(), W = xv.w();
            const std::int64_t oin = D * H * W;
            detail::Scratch<T> dcol(out_ch * 8 * oin);
            for (std::int64_t n = 0; n < xv.n(); ++n) {
                // gather dcol from dy (inverse of the forward scatter)
#pragma omp parallel for schedule(static)
                for (std::int64_t co = 0; co < out_ch; ++co) {
                    const T* dyc = dy->at(n, co);
                    for (std::int64_t off = 0; off < 8; ++off) {
                        const std::int64_t kz = off >> 2, ky = (off >> 1) & 1,
                                           kx = off & 1;
                        T* dst = dcol.get() + (co * 8 + off) * oin;
                        for (std::int64_t z = 0; z < D; ++z)
                            for (std::int64_t yy = 0; yy < H; ++yy) {
                                const T* srow =
                                    dyc + ((2 * z + kz) * 2 * H + 2 * yy + ky) *
                                              2 * W + kx;
                                T* drow = dst + (z * H + yy) * W;
                                for (std::int64_t xx = 0; xx < W; ++xx)
                                    drow[xx] = srow[2 * xx];
                            }
                    }
                }
                if (ws.requires_grad()) {
                    gemm(xv.at(n, 0), dcol.get(), ws.grad().ptr(), in_ch, oin,
                         out_ch * 8, false, true, true);
                    T* db = bs.grad().ptr();
#pragma omp parallel for schedule(static)
                    for (std::int64_t co = 0; co < out_ch; ++co) {
                        const T* dyc = dy->at(n, co);
                        double s = 0;
                        for (std::int64_t i = 0; i < 8 * oin; ++i) s += dyc[i];
                        db[co] += static_cast<T>(s);
                    }
                }
                if (xs.requires_grad())
                    gemm(ws.value().ptr(), dcol.get(), xs.grad().at(n, 0),
                         in_ch, out_ch * 8, oin, false, false, true);
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Instance normalization with per-channel affine (gamma, beta).

template <typename T>
Var<T> instance_norm(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma,
                     const Var<T>& beta, double eps) {
    const Tensor<T>& xv = x.value();
    const std::int64_t N = xv.n(), C = xv.c(), S = xv.spatial();
    Tensor<T> yv = Tensor<T>::zeros_like(xv);
    std::vector<double> mean(static_cast<std::size_t>(N * C));
    std::vector<double> invstd(static_cast<std::size_t>(N * C));
#pragma omp parallel for schedule(static)
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const std::int64_t n = nc / C, c = nc % C;
        const T* xp = xv.at(n, c);
        double s1 = 0, s2 = 0;
        for (std::int64_t i = 0; i < S; ++i) {
            double v = double(xp[i]);
            s1 += v;
            s2 += v * v;
        }
        const double mu = s1 / double(S);
        const double var = std::max(0.0, s2 / double(S) - mu * mu);
        const double is = 1.0 / std::sqrt(var + eps);
        mean[static_cast<std::size_t>(nc)] = mu;
        invstd[static_cast<std::size_t>(nc)] = is;
        const double g = double(gamma.value().ptr()[c]);
        const double bt = double(beta.value().ptr()[c]);
        T* yp = yv.at(n, c);
        for (std::int64_t i = 0; i < S; ++i)
            yp[i] = static_cast<T>((double(xp[i]) - mu) * is * g + bt);
    }
    Var<T> y(std::move(yv), x.requires_grad() || gamma.requires_grad());
    if (tape && y.requires_grad()) {
        auto xs = x, gs = gamma, bs = beta, ys = y;
        tape->push([xs, gs, bs, ys, mean = std::move(mean),
                    invstd = std::move(invstd)]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const Tensor<T>& xv = xs.value();
            const std::int64_t N = xv.n(), C = xv.c(), S = xv.spatial();
            std::vector<double> dg(static_cast<std::size_t>(N * C), 0.0);
            std::vector<double> db(static_cast<std::size_t>(N * C), 0.0);
            const bool need_dx = xs.requires_grad();
            // Allocate the grad buffer before the parallel region; grad() is
            // lazy and must not race.
            Tensor<T>* dxt = need_dx ? &xs.grad() : nullptr;
#pragma omp parallel for schedule(static)
            for (std::int64_t nc = 0; nc < N * C; ++nc) {
                const std::int64_t n = nc / C, c = nc % C;
                const T* xp = xv.at(n, c);
                const T* dyp = dy->at(n, c);
                const double mu = mean[static_cast<std::size_t>(nc)];
                const double is = invstd[static_cast<std::size_t>(nc)];
                double sum_dy = 0, sum_dy_xhat = 0;
                for (std::int64_t i = 0; i < S; ++i) {
                    const double xhat = (double(xp[i]) - mu) * is;
                    sum_dy += double(dyp[i]);
                    sum_dy_xhat += double(dyp[i]) * xhat;
                }
                db[static_cast<std::size_t>(nc)] = sum_dy;
                dg[static_cast<std::size_t>(nc)] = sum_dy_xhat;
                if (need_dx) {
                    const double g = double(gs.value().ptr()[c]);
                    const double m1 = sum_dy / double(S);
                    const double m2 = sum_dy_xhat / double(S);
                    T* dxp = dxt->at(n, c);
                    for (std::int64_t i = 0; i < S; ++i) {
                        const double xhat = (double(xp[i]) - mu) * is;
                        dxp[i] += static_cast<T>(
                            g * is * (double(dyp[i]) - m1 - xhat * m2));
                    }
                }
            }
            if (gs.requires_grad()) {
                T* gg = gs.grad().ptr();
                T* gb = bs.grad().ptr();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t c = 0; c < C; ++c) {
                        gg[c] += static_cast<T>(
                            dg[static_cast<std::size_t>(n * C + c)]);
                        gb[c] += static_cast<T>(
                            db[static_cast<std::size_t>(n * C + c)]);
                    }
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Pointwise / shape ops.

template <typename T>
Var<T> leaky_relu(Tape<T>* tape, const Var<T>& x, double slope) {
    const Tensor<T>& xv = x.value();
    Tensor<T> yv = Tensor<T>::zeros_like(xv);
    const std::int64_t n = xv.numel();
    const T a = static_cast<T>(slope);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        yv.data[static_cast<std::size_t>(i)] =
            xv.data[static_cast<std::size_t>(i)] > T(0)
                ? xv.data[static_cast<std::size_t>(i)]
                : a * xv.data[static_cast<std::size_t>(i)];
    Var<T> y(std::move(yv), x.requires_grad());
    if (tape && y.requires_grad()) {
        auto xs = x, ys = y;
        tape->push([xs, ys, a]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            Tensor<T>& dx = xs.grad();
            const Tensor<T>& xv = xs.value();
            const std::int64_t n = xv.numel();
#pragma omp parallel for schedule(static)
            for (std::int64_t i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                dx.data[k] += xv.data[k] > T(0) ? dy->data[k] : a * dy->data[k];
            }
        });
    }
    return y;
}

template <typename T>
Var<T> softmax_channels(Tape<T>* tape, const Var<T>& x) {
    const Tensor<T>& xv = x.value();
    const std::int64_t N = xv.n(), C = xv.c(), S = xv.spatial();
    Tensor<T> yv = Tensor<T>::zeros_like(xv);
#pragma omp parallel for schedule(static)
    for (std::int64_t ns = 0; ns < N * S; ++ns) {
        const std::int64_t n = ns / S, v = ns % S;
        const T* xp = xv.ptr() + n * C * S + v;
        T* yp = yv.ptr() + n * C * S + v;
        double mx = double(xp[0]);
        for (std::int64_t c = 1; c < C; ++c)
            mx = std::max(mx, double(xp[c * S]));
        double sum = 0;
        for (std::int64_t c = 0; c < C; ++c) {
            const double e = std::exp(double(xp[c * S]) - mx);
            yp[c * S] = static_cast<T>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::int64_t c = 0; c < C; ++c)
            yp[c * S] = static_cast<T>(double(yp[c * S]) * inv);
    }
    Var<T> y(std::move(yv), x.requires_grad());
    if (tape && y.requires_grad()) {
        auto xs = x, ys = y;
        tape->push([xs, ys]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const Tensor<T>& yv = ys.value();
            Tensor<T>& dx = xs.grad();
            const std::int64_t N = yv.n(), C = yv.c(), S = yv.spatial();
#pragma omp parallel for schedule(static)
            for (std::int64_t ns = 0; ns < N * S; ++ns) {
                const std::int64_t n = ns / S, v = ns % S;
                const T* yp = yv.ptr() + n * C * S + v;
                const T* dyp = dy->ptr() + n * C * S + v;
                T* dxp = dx.ptr() + n * C * S + v;
                double dot = 0;
                for (std::int64_t c = 0; c < C; ++c)
                    dot += double(yp[c * S]) * double(dyp[c * S]);
                for (std::int64_t c = 0; c < C; ++c)
                    dxp[c * S] += static_cast<T>(
                        double(yp[c * S]) * (double(dyp[c * S]) - dot));
            }
        });
    }
    return y;
}

template <typename T>
Var<T> concat_channels(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.n() != bv.n() || av.d() != bv.d() || av.h() != bv.h() ||
        av.w() != bv.w())
        throw Error("concat: spatial/batch mismatch " + av.shape_str() +
                    " vs " + bv.shape_str());
    Tensor<T> yv(av.n(), av.c() + bv.c(), av.d(), av.h(), av.w());
    const std::int64_t S = av.spatial();
    for (std::int64_t n = 0; n < av.n(); ++n) {
        std::copy(av.at(n, 0), av.at(n, 0) + av.c() * S, yv.at(n, 0));
        std::copy(bv.at(n, 0), bv.at(n, 0) + bv.c() * S, yv.at(n, av.c()));
    }
    Var<T> y(std::move(yv), a.requires_grad() || b.requires_grad());
    if (tape && y.requires_grad()) {
        auto as = a, bs = b, ys = y;
        tape->push([as, bs, ys]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const std::int64_t S = as.value().spatial();
            const std::int64_t ca = as.value().c(), cb = bs.value().c();
            for (std::int64_t n = 0; n < as.value().n(); ++n) {
                if (as.requires_grad()) {
                    T* dst = as.grad().at(n, 0);
                    const T* src = dy->at(n, 0);
                    for (std::int64_t i = 0; i < ca * S; ++i) dst[i] += src[i];
                }
                if (bs.requires_grad()) {
                    T* dst = bs.grad().at(n, 0);
                    const T* src = dy->at(n, ca);
                    for (std::int64_t i = 0; i < cb * S; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return y;
}

/// Boundary-attention enhancement: y[n,c,v] = (1 + a[n,v]) * f[n,c,v] where
/// a is channel `att_channel` of the boundary probability map.
template <typename T>
Var<T> enhance(Tape<T>* tape, const Var<T>& feat, const Var<T>& probs,
               std::int64_t att_channel) {
    const Tensor<T>& fv = feat.value();
    const Tensor<T>& pv = probs.value();
    if (fv.n() != pv.n() || fv.d() != pv.d() || fv.h() != pv.h() ||
        fv.w() != pv.w())
        throw Error("enhance: spatial mismatch " + fv.shape_str() + " vs " +
                    pv.shape_str());
    if (att_channel < 0 || att_channel >= pv.c())
        throw Error("enhance: attention channel out of range");
    Tensor<T> yv = Tensor<T>::zeros_like(fv);
    const std::int64_t S = fv.spatial(), C = fv.c();
    for (std::int64_t n = 0; n < fv.n(); ++n) {
        const T* ap = pv.at(n, att_channel);
#pragma omp parallel for schedule(static)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* fp = fv.at(n, c);
            T* yp = yv.at(n, c);
            for (std::int64_t i = 0; i < S; ++i)
                yp[i] = (T(1) + ap[i]) * fp[i];
        }
    }
    Var<T> y(std::move(yv), feat.requires_grad() || probs.requires_grad());
    if (tape && y.requires_grad()) {
        auto fs = feat, ps = probs, ys = y;
        tape->push([fs, ps, ys, att_channel]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const Tensor<T>& fv = fs.value();
            const Tensor<T>& pv = ps.value();
            const std::int64_t S = fv.spatial(), C = fv.c();
            for (std::int64_t n = 0; n < fv.n(); ++n) {
                const T* ap = pv.at(n, att_channel);
                if (fs.requires_grad()) {
                    Tensor<T>& df = fs.grad();
#pragma omp parallel for schedule(static)
                    for (std::int64_t c = 0; c < C; ++c) {
                        const T* dyp = dy->at(n, c);
                        T* dfp = df.at(n, c);
                        for (std::int64_t i = 0; i < S; ++i)
                            dfp[i] += (T(1) + ap[i]) * dyp[i];
                    }
                }
                if (ps.requires_grad()) {
                    T* dap = ps.grad().at(n, att_channel);
                    for (std::int64_t c = 0; c < C; ++c) {
                        const T* dyp = dy->at(n, c);
                        const T* fp = fv.at(n, c);
                        for (std::int64_t i = 0; i < S; ++i)
                            dap[i] += dyp[i] * fp[i];
                    }
                }
            }
        });
    }
    return y;
}

/// Weighted sum of scalar Vars: sum_i w_i * terms_i.
template <typename T>
Var<T> weighted_sum(Tape<T>* tape, const std::vector<Var<T>>& terms,
                    const std::vector<double>& weights) {
    if (terms.size() != weights.size())
        throw Error("weighted_sum: size mismatch");
    double total = 0;
    bool req = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].value().numel() != 1)
            throw Error("weighted_sum expects scalars");
        total += weights[i] * double(terms[i].value().data[0]);
        req = req || terms[i].requires_grad();
    }
    Tensor<T> out(1, 1, 1, 1, 1);
    out.data[0] = static_cast<T>(total);
    Var<T> y(std::move(out), req);
    if (tape && req) {
        auto ts = terms;
        auto ys = y;
        tape->push([ts, ys, weights]() mutable {
            const Tensor<T>* dy = ys.grad_if_any();
            if (!dy) return;
            const double d = double(dy->data[0]);
            for (std::size_t i = 0; i < ts.size(); ++i)
                if (ts[i].requires_grad())
                    ts[i].grad().data[0] += static_cast<T>(weights[i] * d);
        });
    }
    return y;
}

}  // namespace banet
