#pragma once

#include <cstdint>

// Hot inner loops, shared by the tomography, flow and network modules.
// Every parallel kernel here is written gather-style: each output element is
// owned by exactly one thread and its inner summation order is fixed, so the
// results are bit-identical for any thread count. The one scatter kernel
// (project_adjoint) accumulates into a fixed number of per-block partials and
// reduces them in block order, which keeps it thread-count independent too.
//
// kernels::serial holds plain single-threaded twins of the heavy kernels;
// they are the reference implementations used by the consistency tests and
// the benchmark tool.

namespace ctlc::kernels {

// ---- parallel-beam tomography ----------------------------------------

// Ray sampling grid shared by project_forward / project_adjoint. The two
// kernels must walk the exact same sample pattern for adjointness to hold to
// rounding.
struct RayGrid {
    double step = 0.5;     // sample spacing along the ray, pixels
    double s_begin = 0.0;  // first sample offset from the ray's center point
    int n_samples = 0;

    static RayGrid for_image(int image_size);
};

void project_forward(const double* img, int image_size, const double* angles, int n_views,
                     int n_detectors, double detector_spacing, double* sino);

void project_adjoint(const double* sino, int n_views, int n_detectors, double detector_spacing,
                     const double* angles, int image_size, double* img);

// ---- dense 2-D convolution (NCHW, cross-correlation) ------------------

// out[n][co][oy][ox] = bias[co] + sum_{ci,ky,kx} w[co][ci][ky][kx] * in[...]
// out extent per axis: (in + 2*pad - k)/stride + 1
void conv2d_fwd(const double* in, int n, int ci, int h, int w_in, const double* w, int co, int k,
                int stride, int pad, const double* bias, double* out);

// gin[n][ci][iy][ix] = sum over taps of gout * w
void conv2d_bwd_input(const double* gout, int n, int co, int oh, int ow, const double* w, int ci,
                      int k, int stride, int pad, int h, int w_in, double* gin);

// gw[co][ci][ky][kx] += sum_{n,oy,ox} gout * in ; gb[co] += sum gout
// (accumulates: callers zero the buffers when they want fresh gradients)
void conv2d_bwd_weights(const double* gout, int n, int co, int oh, int ow, const double* in,
                        int ci, int h, int w_in, int k, int stride, int pad, double* gw,
                        double* gb);

// ---- backward warp ------------------------------------------------------

// out(p) = bilinear sample of src at (x + u(p), y + v(p)), replicated borders
void warp_bilinear(const double* src, int h, int w, const double* u, const double* v, double* out);

// ---- Horn-Schunck block-Jacobi sweep ------------------------------------

// One sweep of the coupled 2x2 per-pixel solve with 4-neighbor smoothness,
// reading (u_in, v_in) and writing (u_out, v_out).
void hs_sweep(const double* gw, const double* gh, const double* gz, double alpha, int h, int w,
              const double* u_in, const double* v_in, double* u_out, double* v_out);

namespace serial {

void project_forward(const double* img, int image_size, const double* angles, int n_views,
                     int n_detectors, double detector_spacing, double* sino);
void project_adjoint(const double* sino, int n_views, int n_detectors, double detector_spacing,
                     const double* angles, int image_size, double* img);
void conv2d_fwd(const double* in, int n, int ci, int h, int w_in, const double* w, int co, int k,
                int stride, int pad, const double* bias, double* out);
void conv2d_bwd_input(const double* gout, int n, int co, int oh, int ow, const double* w, int ci,
                      int k, int stride, int pad, int h, int w_in, double* gin);
void conv2d_bwd_weights(const double* gout, int n, int co, int oh, int ow, const double* in,
                        int ci, int h, int w_in, int k, int stride, int pad, double* gw,
                        double* gb);
void warp_bilinear(const double* src, int h, int w, const double* u, const double* v, double* out);
void hs_sweep(const double* gw, const double* gh, const double* gz, double alpha, int h, int w,
              const double* u_in, const double* v_in, double* u_out, double* v_out);

}  // namespace serial

}  // namespace ctlc::kernels
