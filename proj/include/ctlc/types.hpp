#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctlc {

/// Thrown when a NaN or Inf shows up in a computation that must stay finite.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 2-D CT slice on a regular pixel grid, row-major, attenuation values
/// normalized to [0, 1] for clean data.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("Image: non-positive dimensions");
    }

    double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

/// Line-integral measurements: one row per projection angle, one column per
/// detector bin.
struct Sinogram {
    int n_views = 0;
    int n_detectors = 0;
    std::vector<double> data;

    Sinogram() = default;
    Sinogram(int nv, int nd, double fill = 0.0)
        : n_views(nv), n_detectors(nd), data(static_cast<size_t>(nv) * nd, fill) {
        if (nv <= 0 || nd <= 0) throw std::invalid_argument("Sinogram: non-positive dimensions");
    }

    double& at(int v, int d) { return data[static_cast<size_t>(v) * n_detectors + d]; }
    double at(int v, int d) const { return data[static_cast<size_t>(v) * n_detectors + d]; }
    size_t size() const { return data.size(); }
};

/// Parallel-beam acquisition geometry. Angles are uniform over [0, pi).
struct ScanGeometry {
    int n_views = 0;
    int n_detectors = 0;
    std::vector<double> angles;       // radians, angles[k] = k*pi/n_views
    double detector_spacing = 1.0;    // image-pixel units per bin
    int image_size = 0;               // square image side, pixels

    static ScanGeometry uniform(int n_views, int n_detectors, int image_size,
                                double detector_spacing = 1.0) {
        if (n_views < 1 || n_detectors < 1 || image_size < 1)
            throw std::invalid_argument("ScanGeometry: counts must be positive");
        if (detector_spacing <= 0.0)
            throw std::invalid_argument("ScanGeometry: detector_spacing must be positive");
        if (static_cast<double>(n_detectors) * detector_spacing <
            std::sqrt(2.0) * static_cast<double>(image_size))
            throw std::invalid_argument(
                "ScanGeometry: detector array must span the image diagonal (n_detectors * "
                "detector_spacing >= sqrt(2) * image_size)");
        ScanGeometry g;
        g.n_views = n_views;
        g.n_detectors = n_detectors;
        g.detector_spacing = detector_spacing;
        g.image_size = image_size;
        g.angles.resize(n_views);
        constexpr double kPi = 3.14159265358979323846;
        for (int k = 0; k < n_views; ++k) g.angles[k] = k * kPi / n_views;
        return g;
    }
};

/// Additive Gaussian measurement noise, deterministic per seed.
struct NoiseSpec {
    double sigma = 0.0;   // standard deviation in sinogram units
    uint64_t seed = 0;

    NoiseSpec() = default;
    NoiseSpec(double s, uint64_t sd) : sigma(s), seed(sd) {
        if (s < 0.0) throw std::invalid_argument("NoiseSpec: sigma must be >= 0");
    }
};

/// Per-pixel displacement between adjacent slices. u is the horizontal
/// component, v the vertical one, both in pixels. The convention is the
/// motion from the first image of a pair to the second; sampling the first
/// image at p - flow(p) aligns it with the second.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<double> u;
    std::vector<double> v;

    FlowField() = default;
    FlowField(int h, int w)
        : height(h), width(w),
          u(static_cast<size_t>(h) * w, 0.0),
          v(static_cast<size_t>(h) * w, 0.0) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("FlowField: non-positive dimensions");
    }

    size_t size() const { return u.size(); }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Throws numeric_error if any value is NaN/Inf.
inline void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw numeric_error(std::string("non-finite value in ") + what);
}

}  // namespace ctlc
