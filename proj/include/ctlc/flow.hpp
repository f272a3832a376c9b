#pragma once

#include "ctlc/types.hpp"

namespace ctlc::nn {
struct FlowNetLite;
}

namespace ctlc::flow {

/// Brightness gradients of a slice pair: spatial derivatives of the average
/// image plus the inter-slice difference.
struct GradientTriple {
    int height = 0, width = 0;
    std::vector<double> gw;  // d brightness / d horizontal
    std::vector<double> gh;  // d brightness / d vertical
    std::vector<double> gz;  // b - a, the inter-slice difference
};

/// Central differences of (a+b)/2 with replicated borders; gz = b - a.
/// `a` is the neighbor slice, `b` the current one.
GradientTriple gradients(const Image& a, const Image& b);

/// Horn-Schunck estimate after `iters` Jacobi sweeps of the regularized
/// least-squares problem (data term + alpha^2 smoothness). Returns the motion
/// from a to b; initialized at zero flow, so the data residual never exceeds
/// its zero-flow value.
FlowField estimate_flow(const Image& a, const Image& b, double alpha = 0.1, int iters = 200);

/// Same interface backed by the learned encoder-decoder estimator.
FlowField estimate_flow_learned(const Image& a, const Image& b, const nn::FlowNetLite& net);

/// Backward warp: output(p) = bilinear sample of src at p + flow(p), borders
/// replicated.
Image warp(const Image& src, const FlowField& flow);

/// Aligns a neighbor slice onto the current one given the estimated motion
/// from neighbor to current: samples the neighbor at p - flow(p).
Image align_to_current(const Image& neighbor, const FlowField& motion);

FlowField negate(const FlowField& f);

/// Data-term residual sum of squares at a given flow.
double brightness_residual(const GradientTriple& g, const FlowField& f);

/// Full regularized objective: residual + alpha^2 * forward-difference
/// smoothness energy.
double flow_objective(const GradientTriple& g, const FlowField& f, double alpha);

}  // namespace ctlc::flow
