#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctlc/types.hpp"

namespace ctlc::io {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

constexpr uint16_t kContainerVersion = 1;

/// Flat binary container: magic "CTLC", version (u16), dtype tag (u8),
/// rank (u8), rank x u32 dims, payload little-endian row-major.
struct Array {
    Dtype dtype = Dtype::f64;
    std::vector<uint32_t> dims;
    std::vector<double> data;  // held as f64 in memory regardless of file dtype

    size_t numel() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

void save_array(const std::filesystem::path& path, const Array& a);
Array load_array(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const Image& img, Dtype dtype = Dtype::f64);
Image load_image(const std::filesystem::path& path);
void save_sinogram(const std::filesystem::path& path, const Sinogram& s,
                   Dtype dtype = Dtype::f64);
Sinogram load_sinogram(const std::filesystem::path& path);
// FlowField travels as rank 3: 2 x H x W (u plane, then v plane)
void save_flow(const std::filesystem::path& path, const FlowField& f, Dtype dtype = Dtype::f64);
FlowField load_flow(const std::filesystem::path& path);

// ---- PNG export ---------------------------------------------------------

/// 8-bit grayscale PNG; values clamped to [0,1] then scaled to [0,255].
void write_png_gray(const std::filesystem::path& path, const Image& img);

/// 8-bit RGB PNG from interleaved rows (3 * width bytes per row).
void write_png_rgb(const std::filesystem::path& path, int height, int width,
                   const std::vector<uint8_t>& rgb);

/// Horizontal side-by-side montage with a thin separator column.
Image montage_row(const std::vector<const Image*>& panels, int gap = 2, double gap_value = 1.0);

/// Flow magnitude as an RGB heat map (dark blue = 0 to red = max).
void write_flow_heatmap(const std::filesystem::path& path, const FlowField& f);

/// Grayscale background with flow arrows drawn every `stride` pixels.
void write_flow_arrows(const std::filesystem::path& path, const Image& background,
                       const FlowField& f, int stride = 8, double scale = 4.0);

// ---- simple line plot -----------------------------------------------------

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal line chart (axes, ticks, one polyline per series) as RGB PNG.
void write_line_plot(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, int width = 640, int height = 480);

// ---- CSV ------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::string>& rows);

}  // namespace ctlc::io
