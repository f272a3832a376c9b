#include "ctlc/tomo.hpp"

#include <complex>

#include "ctlc/fft.hpp"
#include "ctlc/kernels.hpp"
#include "ctlc/rng.hpp"

namespace ctlc::tomo {

namespace {

void check_match(const Sinogram& s, const ScanGeometry& g) {
    require(s.n_views == g.n_views && s.n_detectors == g.n_detectors,
            "sinogram dimensions do not match the scan geometry");
}

}  // namespace

Sinogram forward_project(const Image& image, const ScanGeometry& geom) {
    require(image.height == geom.image_size && image.width == geom.image_size,
            "forward_project: image must be square with side geom.image_size");
    Sinogram sino(geom.n_views, geom.n_detectors);
    kernels::project_forward(image.data.data(), geom.image_size, geom.angles.data(), geom.n_views,
                             geom.n_detectors, geom.detector_spacing, sino.data.data());
    return sino;
}

Image back_project(const Sinogram& sino, const ScanGeometry& geom) {
    check_match(sino, geom);
    Image img(geom.image_size, geom.image_size);
    kernels::project_adjoint(sino.data.data(), geom.n_views, geom.n_detectors,
                             geom.detector_spacing, geom.angles.data(), geom.image_size,
                             img.data.data());
    return img;
}

Sinogram add_noise(const Sinogram& sino, const NoiseSpec& spec) {
    Sinogram out = sino;
    if (spec.sigma == 0.0) return out;
    Rng rng(spec.seed);
    for (double& x : out.data) x += rng.gaussian(0.0, spec.sigma);
    return out;
}

Image fbp(const Sinogram& sino, const ScanGeometry& geom, FilterWindow window) {
    check_match(sino, geom);
    require(geom.n_detectors >= 2, "fbp: need at least 2 detector bins");

    const int nd = geom.n_detectors;
    const size_t padded = 2 * next_pow2(static_cast<size_t>(nd));

    // Ramp filter built from the band-limited spatial kernel (1/4 at the
    // origin, -1/(pi n)^2 at odd offsets): its DFT realizes |f| with the
    // correct near-DC response, which the naive |k| sampling gets wrong
    // (visible as a cupping offset). Scaled so Nyquist maps to 1. The
    // detector spacing cancels against the sampling density the adjoint
    // contributes, leaving the overall pi/(2*n_views) scale below.
    constexpr double kPi = 3.14159265358979323846;
    std::vector<std::complex<double>> kernel(padded, 0.0);
    kernel[0] = 0.25;
    for (size_t n = 1; n <= padded / 2; n += 2) {
        const double v = -1.0 / (kPi * kPi * static_cast<double>(n) * static_cast<double>(n));
        kernel[n] = v;
        kernel[padded - n] = v;
    }
    fft_radix2(kernel, false);
    std::vector<double> filter(padded);
    for (size_t k = 0; k < padded; ++k) {
        double h = 2.0 * kernel[k].real();
        if (window == FilterWindow::Hann) {
            const size_t sym = std::min(k, padded - k);
            const double frac = static_cast<double>(sym) / (static_cast<double>(padded) / 2.0);
            h *= 0.5 * (1.0 + std::cos(kPi * frac));
        }
        filter[k] = h;
    }

    Sinogram filtered(geom.n_views, nd);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < geom.n_views; ++v) {
        std::vector<std::complex<double>> row(padded, 0.0);
        const double* src = sino.data.data() + static_cast<size_t>(v) * nd;
        for (int d = 0; d < nd; ++d) row[d] = src[d];
        fft_radix2(row, false);
        for (size_t k = 0; k < padded; ++k) row[k] *= filter[k];
        fft_radix2(row, true);
        double* dst = filtered.data.data() + static_cast<size_t>(v) * nd;
        for (int d = 0; d < nd; ++d) dst[d] = row[d].real();
    }

    Image img = back_project(filtered, geom);
    const double scale = kPi / (2.0 * geom.n_views);
    for (double& x : img.data) x *= scale;
    return img;
}

}  // namespace ctlc::tomo
