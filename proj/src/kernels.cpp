#include "ctlc/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctlc::kernels {

namespace {

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Joseph-style sampling: walk the ray in 0.5-pixel steps, deposit/collect
// bilinear weights, zero extension outside the grid.
template <bool Adjoint>
inline void trace_ray(double* img_or_sino_value, const double* img, double* img_out,
                      int image_size, double cos_a, double sin_a, double t, const RayGrid& grid) {
    const double c = (image_size - 1) * 0.5;
    double x = c + t * cos_a - grid.s_begin * sin_a;
    double y = c + t * sin_a + grid.s_begin * cos_a;
    const double dx = -grid.step * sin_a;
    const double dy = grid.step * cos_a;
    double sum = 0.0;
    const double deposit = Adjoint ? *img_or_sino_value * grid.step : 0.0;
    for (int k = 0; k < grid.n_samples; ++k, x += dx, y += dy) {
        if (x <= -1.0 || x >= image_size || y <= -1.0 || y >= image_size) continue;
        const int ix0 = static_cast<int>(std::floor(x));
        const int iy0 = static_cast<int>(std::floor(y));
        const double fx = x - ix0;
        const double fy = y - iy0;
        const bool x0_in = ix0 >= 0, x1_in = ix0 + 1 < image_size;
        const bool y0_in = iy0 >= 0, y1_in = iy0 + 1 < image_size;
        const ptrdiff_t row0 = static_cast<ptrdiff_t>(iy0) * image_size;
        const ptrdiff_t row1 = row0 + image_size;
        if constexpr (Adjoint) {
            if (y0_in) {
                if (x0_in) img_out[row0 + ix0] += deposit * (1 - fx) * (1 - fy);
                if (x1_in) img_out[row0 + ix0 + 1] += deposit * fx * (1 - fy);
            }
            if (y1_in) {
                if (x0_in) img_out[row1 + ix0] += deposit * (1 - fx) * fy;
                if (x1_in) img_out[row1 + ix0 + 1] += deposit * fx * fy;
            }
        } else {
            double s = 0.0;
            if (y0_in) {
                if (x0_in) s += img[row0 + ix0] * (1 - fx) * (1 - fy);
                if (x1_in) s += img[row0 + ix0 + 1] * fx * (1 - fy);
            }
            if (y1_in) {
                if (x0_in) s += img[row1 + ix0] * (1 - fx) * fy;
                if (x1_in) s += img[row1 + ix0 + 1] * fx * fy;
            }
            sum += s;
        }
    }
    if constexpr (!Adjoint) *img_or_sino_value = sum * grid.step;
}

template <bool Parallel>
void project_forward_impl(const double* img, int image_size, const double* angles, int n_views,
                          int n_detectors, double detector_spacing, double* sino) {
    const RayGrid grid = RayGrid::for_image(image_size);
    const double d_center = (n_detectors - 1) * 0.5;
#pragma omp parallel for schedule(static) if (Parallel)
    for (int v = 0; v < n_views; ++v) {
        const double cos_a = std::cos(angles[v]);
        const double sin_a = std::sin(angles[v]);
        double* row = sino + static_cast<size_t>(v) * n_detectors;
        for (int d = 0; d < n_detectors; ++d) {
            const double t = (d - d_center) * detector_spacing;
            trace_ray<false>(&row[d], img, nullptr, image_size, cos_a, sin_a, t, grid);
        }
    }
}

// Scatter adjoint. Views are split into a fixed number of blocks; each block
// accumulates into a private partial image and the partials are reduced in
// block order, so the result does not depend on the thread count.
constexpr int kAdjointBlocks = 16;

template <bool Parallel>
void project_adjoint_impl(const double* sino, int n_views, int n_detectors,
                          double detector_spacing, const double* angles, int image_size,
                          double* img) {
    const RayGrid grid = RayGrid::for_image(image_size);
    const double d_center = (n_detectors - 1) * 0.5;
    const size_t npix = static_cast<size_t>(image_size) * image_size;
    const int n_blocks = std::min(kAdjointBlocks, n_views);
    std::vector<double> partials(static_cast<size_t>(n_blocks) * npix, 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
    for (int b = 0; b < n_blocks; ++b) {
        double* part = partials.data() + static_cast<size_t>(b) * npix;
        const int v_lo = static_cast<int>(static_cast<int64_t>(b) * n_views / n_blocks);
        const int v_hi = static_cast<int>(static_cast<int64_t>(b + 1) * n_views / n_blocks);
        for (int v = v_lo; v < v_hi; ++v) {
            const double cos_a = std::cos(angles[v]);
            const double sin_a = std::sin(angles[v]);
            const double* row = sino + static_cast<size_t>(v) * n_detectors;
            for (int d = 0; d < n_detectors; ++d) {
                double value = row[d];
                if (value == 0.0) continue;
                const double t = (d - d_center) * detector_spacing;
                trace_ray<true>(&value, nullptr, part, image_size, cos_a, sin_a, t, grid);
            }
        }
    }
    std::fill(img, img + npix, 0.0);
    for (int b = 0; b < n_blocks; ++b) {
        const double* part = partials.data() + static_cast<size_t>(b) * npix;
        for (size_t i = 0; i < npix; ++i) img[i] += part[i];
    }
}

template <bool Parallel, int StaticStride>
void conv2d_fwd_impl(const double* in, int n, int ci, int h, int w_in, const double* w, int co,
                     int k, int stride_arg, int pad, const double* bias, double* out) {
    const int stride = StaticStride > 0 ? StaticStride : stride_arg;
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w_in + 2 * pad - k) / stride + 1;
    const size_t in_plane = static_cast<size_t>(h) * w_in;
    const size_t out_plane = static_cast<size_t>(oh) * ow;
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
    for (int in_b = 0; in_b < n; ++in_b) {
        for (int oc = 0; oc < co; ++oc) {
            double* out_p = out + (static_cast<size_t>(in_b) * co + oc) * out_plane;
            const double bv = bias ? bias[oc] : 0.0;
            std::fill(out_p, out_p + out_plane, bv);
            for (int ic = 0; ic < ci; ++ic) {
                const double* in_p = in + (static_cast<size_t>(in_b) * ci + ic) * in_plane;
                const double* w_p =
                    w + (static_cast<size_t>(oc) * ci + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(pad - ky, stride));
                    const int oy_hi = std::min(oh, floor_div(h - 1 - ky + pad, stride) + 1);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = w_p[ky * k + kx];
                        if (wv == 0.0) continue;
                        const int ox_lo = std::max(0, ceil_div(pad - kx, stride));
                        const int ox_hi = std::min(ow, floor_div(w_in - 1 - kx + pad, stride) + 1);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* __restrict in_row =
                                in_p + static_cast<size_t>(iy) * w_in - pad + kx;
                            double* __restrict out_row = out_p + static_cast<size_t>(oy) * ow;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                out_row[ox] += wv * in_row[static_cast<size_t>(ox) * stride];
                        }
                    }
                }
            }
        }
    }
}

template <bool Parallel, int StaticStride>
void conv2d_bwd_input_impl(const double* gout, int n, int co, int oh, int ow, const double* w,
                           int ci, int k, int stride_arg, int pad, int h, int w_in, double* gin) {
    const int stride = StaticStride > 0 ? StaticStride : stride_arg;
    const size_t in_plane = static_cast<size_t>(h) * w_in;
    const size_t out_plane = static_cast<size_t>(oh) * ow;
#pragma omp parallel for collapse(2) schedule(static) if (Parallel)
    for (int in_b = 0; in_b < n; ++in_b) {
        for (int ic = 0; ic < ci; ++ic) {
            double* gin_p = gin + (static_cast<size_t>(in_b) * ci + ic) * in_plane;
            std::fill(gin_p, gin_p + in_plane, 0.0);
            for (int oc = 0; oc < co; ++oc) {
                const double* gout_p = gout + (static_cast<size_t>(in_b) * co + oc) * out_plane;
                const double* w_p = w + (static_cast<size_t>(oc) * ci + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(pad - ky, stride));
                    const int oy_hi = std::min(oh, floor_div(h - 1 - ky + pad, stride) + 1);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = w_p[ky * k + kx];
                        if (wv == 0.0) continue;
                        const int ox_lo = std::max(0, ceil_div(pad - kx, stride));
                        const int ox_hi = std::min(ow, floor_div(w_in - 1 - kx + pad, stride) + 1);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            double* __restrict gin_row =
                                gin_p + static_cast<size_t>(iy) * w_in - pad + kx;
                            const double* __restrict gout_row =
                                gout_p + static_cast<size_t>(oy) * ow;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                gin_row[static_cast<size_t>(ox) * stride] += wv * gout_row[ox];
                        }
                    }
                }
            }
        }
    }
}

template <bool Parallel, int StaticStride>
void conv2d_bwd_weights_impl(const double* gout, int n, int co, int oh, int ow, const double* in,
                             int ci, int h, int w_in, int k, int stride_arg, int pad, double* gw,
                             double* gb) {
    const int stride = StaticStride > 0 ? StaticStride : stride_arg;
    const size_t in_plane = static_cast<size_t>(h) * w_in;
    const size_t out_plane = static_cast<size_t>(oh) * ow;
#pragma omp parallel for schedule(static) if (Parallel)
    for (int oc = 0; oc < co; ++oc) {
        double bias_acc = 0.0;
        for (int in_b = 0; in_b < n; ++in_b) {
            const double* gout_p = gout + (static_cast<size_t>(in_b) * co + oc) * out_plane;
            for (size_t i = 0; i < out_plane; ++i) bias_acc += gout_p[i];
            for (int ic = 0; ic < ci; ++ic) {
                const double* in_p = in + (static_cast<size_t>(in_b) * ci + ic) * in_plane;
                double* gw_p = gw + (static_cast<size_t>(oc) * ci + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    const int oy_lo = std::max(0, ceil_div(pad - ky, stride));
                    const int oy_hi = std::min(oh, floor_div(h - 1 - ky + pad, stride) + 1);
                    for (int kx = 0; kx < k; ++kx) {
                        const int ox_lo = std::max(0, ceil_div(pad - kx, stride));
                        const int ox_hi = std::min(ow, floor_div(w_in - 1 - kx + pad, stride) + 1);
                        double acc = 0.0;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            const double* __restrict in_row =
                                in_p + static_cast<size_t>(iy) * w_in - pad + kx;
                            const double* __restrict gout_row =
                                gout_p + static_cast<size_t>(oy) * ow;
                            // four independent accumulators break the FP
                            // dependence chain; order is fixed either way
                            double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                            int ox = ox_lo;
                            for (; ox + 4 <= ox_hi; ox += 4) {
                                a0 += gout_row[ox] * in_row[static_cast<size_t>(ox) * stride];
                                a1 += gout_row[ox + 1] *
                                      in_row[static_cast<size_t>(ox + 1) * stride];
                                a2 += gout_row[ox + 2] *
                                      in_row[static_cast<size_t>(ox + 2) * stride];
                                a3 += gout_row[ox + 3] *
                                      in_row[static_cast<size_t>(ox + 3) * stride];
                            }
                            for (; ox < ox_hi; ++ox)
                                a0 += gout_row[ox] * in_row[static_cast<size_t>(ox) * stride];
                            acc += (a0 + a1) + (a2 + a3);
                        }
                        gw_p[ky * k + kx] += acc;
                    }
                }
            }
        }
        if (gb) gb[oc] += bias_acc;
    }
}

template <bool Parallel>
void warp_bilinear_impl(const double* src, int h, int w, const double* u, const double* v,
                        double* out) {
#pragma omp parallel for schedule(static) if (Parallel)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double sx = std::clamp(x + u[i], 0.0, static_cast<double>(w - 1));
            double sy = std::clamp(y + v[i], 0.0, static_cast<double>(h - 1));
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double* r0 = src + static_cast<size_t>(y0) * w;
            const double* r1 = src + static_cast<size_t>(y1) * w;
            out[i] = (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x1]) +
                     fy * ((1 - fx) * r1[x0] + fx * r1[x1]);
        }
    }
}

template <bool Parallel>
void hs_sweep_impl(const double* gw, const double* gh, const double* gz, double alpha, int h,
                   int w, const double* u_in, const double* v_in, double* u_out, double* v_out) {
    const double a2 = alpha * alpha;
#pragma omp parallel for schedule(static) if (Parallel)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            double su = 0.0, sv = 0.0;
            int deg = 0;
            if (y > 0) { su += u_in[i - w]; sv += v_in[i - w]; ++deg; }
            if (y + 1 < h) { su += u_in[i + w]; sv += v_in[i + w]; ++deg; }
            if (x > 0) { su += u_in[i - 1]; sv += v_in[i - 1]; ++deg; }
            if (x + 1 < w) { su += u_in[i + 1]; sv += v_in[i + 1]; ++deg; }
            // per-pixel 2x2 solve with neighbor values frozen
            const double a11 = a2 * deg + gw[i] * gw[i];
            const double a12 = gw[i] * gh[i];
            const double a22 = a2 * deg + gh[i] * gh[i];
            const double bu = a2 * su - gw[i] * gz[i];
            const double bv = a2 * sv - gh[i] * gz[i];
            const double det = a11 * a22 - a12 * a12;
            u_out[i] = (a22 * bu - a12 * bv) / det;
            v_out[i] = (a11 * bv - a12 * bu) / det;
        }
    }
}

}  // namespace

RayGrid RayGrid::for_image(int image_size) {
    RayGrid g;
    g.step = 0.5;
    const double half_span = 0.7071067811865476 * image_size + 1.0;
    g.s_begin = -half_span;
    g.n_samples = static_cast<int>(std::floor(2.0 * half_span / g.step)) + 1;
    return g;
}

void project_forward(const double* img, int image_size, const double* angles, int n_views,
                     int n_detectors, double detector_spacing, double* sino) {
    project_forward_impl<true>(img, image_size, angles, n_views, n_detectors, detector_spacing,
                               sino);
}

void project_adjoint(const double* sino, int n_views, int n_detectors, double detector_spacing,
                     const double* angles, int image_size, double* img) {
    project_adjoint_impl<true>(sino, n_views, n_detectors, detector_spacing, angles, image_size,
                               img);
}

void conv2d_fwd(const double* in, int n, int ci, int h, int w_in, const double* w, int co, int k,
                int stride, int pad, const double* bias, double* out) {
    if (stride == 1)
        conv2d_fwd_impl<true, 1>(in, n, ci, h, w_in, w, co, k, stride, pad, bias, out);
    else if (stride == 2)
        conv2d_fwd_impl<true, 2>(in, n, ci, h, w_in, w, co, k, stride, pad, bias, out);
    else
        conv2d_fwd_impl<true, 0>(in, n, ci, h, w_in, w, co, k, stride, pad, bias, out);
}

void conv2d_bwd_input(const double* gout, int n, int co, int oh, int ow, const double* w, int ci,
                      int k, int stride, int pad, int h, int w_in, double* gin) {
    if (stride == 1)
        conv2d_bwd_input_impl<true, 1>(gout, n, co, oh, ow, w, ci, k, stride, pad, h, w_in, gin);
    else if (stride == 2)
        conv2d_bwd_input_impl<true, 2>(gout, n, co, oh, ow, w, ci, k, stride, pad, h, w_in, gin);
    else
        conv2d_bwd_input_impl<true, 0>(gout, n, co, oh, ow, w, ci, k, stride, pad, h, w_in, gin);
}

void conv2d_bwd_weights(const double* gout, int n, int co, int oh, int ow, const double* in,
                        int ci, int h, int w_in, int k, int stride, int pad, double* gw,
                        double* gb) {
    if (stride == 1)
        conv2d_bwd_weights_impl<true, 1>(gout, n, co, oh, ow, in, ci, h, w_in, k, stride, pad,
                                         gw, gb);
    else if (stride == 2)
        conv2d_bwd_weights_impl<true, 2>(gout, n, co, oh, ow, in, ci, h, w_in, k, stride, pad,
                                         gw, gb);
    else
        conv2d_bwd_weights_impl<true, 0>(gout, n, co, oh, ow, in, ci, h, w_in, k, stride, pad,
                                         gw, gb);
}

void warp_bilinear(const double* src, int h, int w, const double* u, const double* v,
                   double* out) {
    warp_bilinear_impl<true>(src, h, w, u, v, out);
}

void hs_sweep(const double* gw, const double* gh, const double* gz, double alpha, int h, int w,
              const double* u_in, const double* v_in, double* u_out, double* v_out) {
    hs_sweep_impl<true>(gw, gh, gz, alpha, h, w, u_in, v_in, u_out, v_out);
}

namespace serial {

void project_forward(const double* img, int image_size, const double* angles, int n_views,
                     int n_detectors, double detector_spacing, double* sino) {
    project_forward_impl<false>(img, image_size, angles, n_views, n_detectors, detector_spacing,
                                sino);
}

void project_adjoint(const double* sino, int n_views, int n_detectors, double detector_spacing,
                     const double* angles, int image_size, double* img) {
    // plain scatter, no blocking
    const RayGrid grid = RayGrid::for_image(image_size);
    const double d_center = (n_detectors - 1) * 0.5;
    const size_t npix = static_cast<size_t>(image_size) * image_size;
    std::fill(img, img + npix, 0.0);
    for (int v = 0; v < n_views; ++v) {
        const double cos_a = std::cos(angles[v]);
        const double sin_a = std::sin(angles[v]);
        const double* row = sino + static_cast<size_t>(v) * n_detectors;
        for (int d = 0; d < n_detectors; ++d) {
            double value = row[d];
            if (value == 0.0) continue;
            const double t = (d - d_center) * detector_spacing;
            trace_ray<true>(&value, nullptr, img, image_size, cos_a, sin_a, t, grid);
        }
    }
}

void conv2d_fwd(const double* in, int n, int ci, int h, int w_in, const double* w, int co, int k,
                int stride, int pad, const double* bias, double* out) {
    conv2d_fwd_impl<false, 0>(in, n, ci, h, w_in, w, co, k, stride, pad, bias, out);
}

void conv2d_bwd_input(const double* gout, int n, int co, int oh, int ow, const double* w, int ci,
                      int k, int stride, int pad, int h, int w_in, double* gin) {
    conv2d_bwd_input_impl<false, 0>(gout, n, co, oh, ow, w, ci, k, stride, pad, h, w_in, gin);
}

void conv2d_bwd_weights(const double* gout, int n, int co, int oh, int ow, const double* in,
                        int ci, int h, int w_in, int k, int stride, int pad, double* gw,
                        double* gb) {
    conv2d_bwd_weights_impl<false, 0>(gout, n, co, oh, ow, in, ci, h, w_in, k, stride, pad, gw,
                                      gb);
}

void warp_bilinear(const double* src, int h, int w, const double* u, const double* v,
                   double* out) {
    warp_bilinear_impl<false>(src, h, w, u, v, out);
}

void hs_sweep(const double* gw, const double* gh, const double* gz, double alpha, int h, int w,
              const double* u_in, const double* v_in, double* u_out, double* v_out) {
    hs_sweep_impl<false>(gw, gh, gz, alpha, h, w, u_in, v_in, u_out, v_out);
}

}  // namespace serial

}  // namespace ctlc::kernels
