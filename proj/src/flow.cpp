#include "ctlc/flow.hpp"

#include <algorithm>
#include <cmath>

#include "ctlc/kernels.hpp"

namespace ctlc::flow {

GradientTriple gradients(const Image& a, const Image& b) {
    require(a.same_shape(b), "gradients: dimension mismatch");
    const int h = a.height, w = a.width;
    GradientTriple g;
    g.height = h;
    g.width = w;
    g.gw.resize(a.size());
    g.gh.resize(a.size());
    g.gz.resize(a.size());
    auto avg = [&](int y, int x) { return 0.5 * (a.at(y, x) + b.at(y, x)); };
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(0, y - 1), yp = std::min(h - 1, y + 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(w - 1, x + 1);
            const size_t i = static_cast<size_t>(y) * w + x;
            g.gw[i] = 0.5 * (avg(y, xp) - avg(y, xm));
            g.gh[i] = 0.5 * (avg(yp, x) - avg(ym, x));
            g.gz[i] = b.data[i] - a.data[i];
        }
    }
    return g;
}

FlowField estimate_flow(const Image& a, const Image& b, double alpha, int iters) {
    require(a.same_shape(b), "estimate_flow: dimension mismatch");
    require(alpha > 0.0, "estimate_flow: alpha must be positive");
    require(iters >= 1, "estimate_flow: need at least one iteration");
    const GradientTriple g = gradients(a, b);
    const int h = a.height, w = a.width;
    FlowField cur(h, w);
    FlowField next(h, w);
    for (int it = 0; it < iters; ++it) {
        kernels::hs_sweep(g.gw.data(), g.gh.data(), g.gz.data(), alpha, h, w, cur.u.data(),
                          cur.v.data(), next.u.data(), next.v.data());
        std::swap(cur, next);
    }
    return cur;
}

Image warp(const Image& src, const FlowField& flow) {
    require(src.height == flow.height && src.width == flow.width, "warp: dimension mismatch");
    Image out(src.height, src.width);
    kernels::warp_bilinear(src.data.data(), src.height, src.width, flow.u.data(), flow.v.data(),
                           out.data.data());
    return out;
}

FlowField negate(const FlowField& f) {
    FlowField out = f;
    for (double& x : out.u) x = -x;
    for (double& x : out.v) x = -x;
    return out;
}

Image align_to_current(const Image& neighbor, const FlowField& motion) {
    return warp(neighbor, negate(motion));
}

double brightness_residual(const GradientTriple& g, const FlowField& f) {
    require(g.height == f.height && g.width == f.width, "brightness_residual: mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < f.size(); ++i) {
        const double r = g.gw[i] * f.u[i] + g.gh[i] * f.v[i] + g.gz[i];
        acc += r * r;
    }
    return acc;
}

double flow_objective(const GradientTriple& g, const FlowField& f, double alpha) {
    double acc = brightness_residual(g, f);
    const int h = f.height, w = f.width;
    const double a2 = alpha * alpha;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (x + 1 < w) {
                const double du = f.u[i + 1] - f.u[i];
                const double dv = f.v[i + 1] - f.v[i];
                acc += a2 * (du * du + dv * dv);
            }
            if (y + 1 < h) {
                const double du = f.u[i + w] - f.u[i];
                const double dv = f.v[i + w] - f.v[i];
                acc += a2 * (du * du + dv * dv);
            }
        }
    }
    return acc;
}

}  // namespace ctlc::flow
