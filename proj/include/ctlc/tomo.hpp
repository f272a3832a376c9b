#pragma once

#include "ctlc/types.hpp"

namespace ctlc::tomo {

enum class FilterWindow { Ramp, Hann };

/// Parallel-beam line integrals of a square image: one sinogram row per view,
/// one column per detector bin. Joseph-style sampling, 0.5-pixel steps,
/// bilinear interpolation, zero extension outside the grid.
Sinogram forward_project(const Image& image, const ScanGeometry& geom);

/// Exact discrete adjoint of forward_project (same sampling pattern and
/// interpolation weights, transposed).
Image back_project(const Sinogram& sino, const ScanGeometry& geom);

/// Adds i.i.d. Gaussian noise, deterministic per spec.seed.
Sinogram add_noise(const Sinogram& sino, const NoiseSpec& spec);

/// Filtered backprojection: frequency-domain ramp filter per view row
/// (optionally Hann-apodized), then the adjoint scaled by pi/(2*n_views).
Image fbp(const Sinogram& sino, const ScanGeometry& geom,
          FilterWindow window = FilterWindow::Ramp);

}  // namespace ctlc::tomo
