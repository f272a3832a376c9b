#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctlc/dataset.hpp"
#include "ctlc/io.hpp"
#include "ctlc/tomo.hpp"
#include "ctlc/types.hpp"

namespace ctlc::sim {

enum class PhantomKind { Ellipsoids, SheppLogan3d };

/// Stack of coherent slices: adjacent cross-sections differ by a smooth
/// deformation of at most coherence_scale pixels plus bounded structural
/// change (ellipsoids entering/leaving the cut plane).
struct PhantomVolume {
    int depth = 0;
    std::vector<Image> slices;
    double coherence_scale = 0.0;
};

/// Low-dose simulation settings for one volume.
struct DatasetSpec {
    int n_views = 60;
    int n_detectors = 96;
    double sigma = 0.5;          // noise std in normalized line-integral units
    int image_size = 64;
    int depth = 64;
    uint64_t seed = 0;
    double split_fraction = 1.0;  // fraction of slices in the training block
    tomo::FilterWindow window = tomo::FilterWindow::Ramp;
};

/// Classic head phantom slice, values in [0, 1].
Image shepp_logan(int size);

PhantomVolume make_phantom_volume(PhantomKind kind, int size, int depth, double coherence_scale,
                                  uint64_t seed);

/// Pushes every slice through the low-dose protocol: project, add noise
/// (seeded per slice), filtered backprojection.
std::vector<Image> simulate_recoveries(const PhantomVolume& vol, const DatasetSpec& spec);

/// Simulates every slice through the low-dose protocol (project, add noise,
/// FBP) and assembles slice batches with the boundary neighbor rule. The
/// train/val split is by contiguous blocks and neighbor sets never cross the
/// split, so no validation slice leaks into training.
Dataset build_dataset(const PhantomVolume& vol, const DatasetSpec& spec);

/// Reads a flat binary volume (depth x height x width, f32 or f64
/// little-endian) and min-max normalizes it to [0, 1]; a constant volume maps
/// to all zeros.
PhantomVolume load_raw_volume(const std::filesystem::path& path, int depth, int height, int width,
                              io::Dtype dtype);

// ---- on-disk dataset (manifest + CTLC slice files) ------------------------

struct VolumeEntry {
    std::string role;  // "train" or "val"
    std::vector<std::string> s_paths;  // relative to the manifest directory
    std::vector<std::string> x_paths;
};

struct Manifest {
    DatasetSpec spec;
    uint64_t seed = 0;
    std::vector<VolumeEntry> volumes;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

/// Loads every volume listed in the manifest, assembling batches per volume
/// (the neighbor rule is applied within each volume independently).
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Assembles batches from per-slice recoveries and targets of one block.
std::vector<SliceBatch> assemble_batches(const std::vector<Image>& s,
                                         const std::vector<Image>& x);

}  // namespace ctlc::sim
