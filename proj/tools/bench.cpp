// Times the OpenMP kernels against their serial reference implementations.

#include <chrono>
#include <functional>
#include <cstdio>
#include <string>
#include <vector>

#include "ctlc/flow.hpp"
#include "ctlc/kernels.hpp"
#include "ctlc/rng.hpp"
#include "ctlc/sim.hpp"
#include "ctlc/tomo.hpp"
#include "ctlc/types.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = clock_type::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clock_type::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-22s %10.2f ms %10.2f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    int size = 128;
    int reps = 3;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--size" && i + 1 < argc) size = std::atoi(argv[++i]);
        else if (a == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
        else {
            std::printf("usage: %s [--size N] [--reps R]\n", argv[0]);
            return 1;
        }
    }
#ifdef _OPENMP
    std::printf("threads: %d, size: %d, reps: %d\n", omp_get_max_threads(), size, reps);
#else
    std::printf("built without OpenMP; size: %d, reps: %d\n", size, reps);
#endif
    std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    using namespace ctlc;
    const Image phantom = sim::shepp_logan(size);
    const auto geom = ScanGeometry::uniform(180, (size * 3) / 2, size);
    Sinogram sino(geom.n_views, geom.n_detectors);
    Image img(size, size);

    report("project_forward",
           time_ms([&] {
               kernels::serial::project_forward(phantom.data.data(), size, geom.angles.data(),
                                                geom.n_views, geom.n_detectors,
                                                geom.detector_spacing, sino.data.data());
           }, reps),
           time_ms([&] {
               kernels::project_forward(phantom.data.data(), size, geom.angles.data(),
                                        geom.n_views, geom.n_detectors, geom.detector_spacing,
                                        sino.data.data());
           }, reps));

    report("project_adjoint",
           time_ms([&] {
               kernels::serial::project_adjoint(sino.data.data(), geom.n_views, geom.n_detectors,
                                                geom.detector_spacing, geom.angles.data(), size,
                                                img.data.data());
           }, reps),
           time_ms([&] {
               kernels::project_adjoint(sino.data.data(), geom.n_views, geom.n_detectors,
                                        geom.detector_spacing, geom.angles.data(), size,
                                        img.data.data());
           }, reps));

    // convolution on a mid-network shaped tensor
    const int n = 1, ci = 64, co = 64, h = size / 2, w = size / 2, k = 3;
    Rng rng(7);
    std::vector<double> x(static_cast<size_t>(n) * ci * h * w), wts(static_cast<size_t>(co) * ci * k * k),
        bias(co), out(static_cast<size_t>(n) * co * h * w), gw(wts.size()), gb(co),
        gin(x.size());
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : wts) v = rng.gaussian(0.0, 0.05);

    report("conv2d_fwd",
           time_ms([&] {
               kernels::serial::conv2d_fwd(x.data(), n, ci, h, w, wts.data(), co, k, 1, 1,
                                           bias.data(), out.data());
           }, reps),
           time_ms([&] {
               kernels::conv2d_fwd(x.data(), n, ci, h, w, wts.data(), co, k, 1, 1, bias.data(),
                                   out.data());
           }, reps));

    report("conv2d_bwd_input",
           time_ms([&] {
               kernels::serial::conv2d_bwd_input(out.data(), n, co, h, w, wts.data(), ci, k, 1, 1,
                                                 h, w, gin.data());
           }, reps),
           time_ms([&] {
               kernels::conv2d_bwd_input(out.data(), n, co, h, w, wts.data(), ci, k, 1, 1, h, w,
                                         gin.data());
           }, reps));

    report("conv2d_bwd_weights",
           time_ms([&] {
               std::fill(gw.begin(), gw.end(), 0.0);
               std::fill(gb.begin(), gb.end(), 0.0);
               kernels::serial::conv2d_bwd_weights(out.data(), n, co, h, w, x.data(), ci, h, w, k,
                                                   1, 1, gw.data(), gb.data());
           }, reps),
           time_ms([&] {
               std::fill(gw.begin(), gw.end(), 0.0);
               std::fill(gb.begin(), gb.end(), 0.0);
               kernels::conv2d_bwd_weights(out.data(), n, co, h, w, x.data(), ci, h, w, k, 1, 1,
                                           gw.data(), gb.data());
           }, reps));

    FlowField fl(size, size);
    for (size_t i = 0; i < fl.size(); ++i) {
        fl.u[i] = 0.8;
        fl.v[i] = -0.4;
    }
    Image warped(size, size);
    report("warp_bilinear",
           time_ms([&] {
               kernels::serial::warp_bilinear(phantom.data.data(), size, size, fl.u.data(),
                                              fl.v.data(), warped.data.data());
           }, reps),
           time_ms([&] {
               kernels::warp_bilinear(phantom.data.data(), size, size, fl.u.data(), fl.v.data(),
                                      warped.data.data());
           }, reps));

    const auto grad = flow::gradients(phantom, warped);
    FlowField fa(size, size), fb(size, size);
    report("hs_sweep x50",
           time_ms([&] {
               for (int i = 0; i < 50; ++i) {
                   kernels::serial::hs_sweep(grad.gw.data(), grad.gh.data(), grad.gz.data(), 1.0,
                                             size, size, fa.u.data(), fa.v.data(), fb.u.data(),
                                             fb.v.data());
                   std::swap(fa, fb);
               }
           }, reps),
           time_ms([&] {
               for (int i = 0; i < 50; ++i) {
                   kernels::hs_sweep(grad.gw.data(), grad.gh.data(), grad.gz.data(), 1.0, size,
                                     size, fa.u.data(), fa.v.data(), fb.u.data(), fb.v.data());
                   std::swap(fa, fb);
               }
           }, reps));

    return 0;
}
