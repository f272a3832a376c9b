#include "ctlc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctlc/rng.hpp"

namespace ctlc::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
    double value;   // additive intensity
    double a, b;    // semi-axes, normalized units
    double x0, y0;  // center, normalized units
    double phi;     // rotation, radians
};

// Modified Shepp-Logan ellipse set (normalized [-1,1] coordinates).
const Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0 * kPi / 180.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0 * kPi / 180.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
};

// Rasterizes additive ellipses with 2x2 supersampling followed by one
// binomial smoothing pass. The soft edge models the finite resolution of
// real reconstructed ground truth; box-sampled hard edges are an artifact a
// bilinear-sampled projector chain can never reproduce.
Image rasterize(const std::vector<Ellipse>& ellipses, int size) {
    Image img(size, size);
    const double inv = 2.0 / size;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < 2; ++sy) {
                for (int sx = 0; sx < 2; ++sx) {
                    const double xn = (x + 0.25 + 0.5 * sx) * inv - 1.0;
                    const double yn = 1.0 - (y + 0.25 + 0.5 * sy) * inv;
                    double v = 0.0;
                    for (const auto& e : ellipses) {
                        const double dx = xn - e.x0;
                        const double dy = yn - e.y0;
                        const double c = std::cos(e.phi), s = std::sin(e.phi);
                        const double xi = dx * c + dy * s;
                        const double eta = -dx * s + dy * c;
                        if ((xi * xi) / (e.a * e.a) + (eta * eta) / (e.b * e.b) <= 1.0)
                            v += e.value;
                    }
                    acc += v;
                }
            }
            img.at(y, x) = std::clamp(acc * 0.25, 0.0, 1.0);
        }
    }
    // separable [1 2 1]/4 pass, replicated borders
    Image tmp(size, size);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(size - 1, x + 1);
            tmp.at(y, x) = 0.25 * img.at(y, xm) + 0.5 * img.at(y, x) + 0.25 * img.at(y, xp);
        }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < size; ++y) {
        const int ym = std::max(0, y - 1), yp = std::min(size - 1, y + 1);
        for (int x = 0; x < size; ++x)
            img.at(y, x) = 0.25 * tmp.at(ym, x) + 0.5 * tmp.at(y, x) + 0.25 * tmp.at(yp, x);
    }
    return img;
}

// Smooth per-slice drift whose slice-to-slice step never exceeds `scale`
// pixels; the amplitude is capped and the frequency raised to keep the step
// budget when the cap binds.
struct Drift {
    double amp = 0.0, omega = 0.0, phase = 0.0;

    static Drift make(Rng& rng, double scale, double max_amp, int depth) {
        Drift d;
        if (scale <= 0.0 || depth < 2) return d;
        const double cycles = rng.uniform(1.5, 3.0);
        d.omega = 2.0 * kPi * cycles / depth;
        d.amp = scale / d.omega;
        if (d.amp > max_amp) {
            d.amp = max_amp;
            d.omega = scale / max_amp;
        }
        d.phase = rng.uniform(0.0, 2.0 * kPi);
        return d;
    }

    double at(int z) const { return amp * std::sin(omega * z + phase); }
};

struct Ellipsoid3d {
    double value;
    double a, b, c;       // semi-axes (a, b in normalized xy units, c in slices)
    double x0, y0;        // center, normalized
    double z0;            // center slice
    double phi;
    Drift drift_x, drift_y, drift_r;
};

std::vector<Ellipse> cross_section(const std::vector<Ellipsoid3d>& solids, int z, int size) {
    std::vector<Ellipse> out;
    const double px = 2.0 / size;  // one pixel in normalized units
    for (const auto& s : solids) {
        const double dz = (z - s.z0) / s.c;
        if (std::abs(dz) >= 1.0) continue;
        const double shrink = std::sqrt(1.0 - dz * dz);
        const double breathe = 1.0 + s.drift_r.at(z) * px * 0.5;
        Ellipse e;
        e.value = s.value;
        e.a = std::max(1.5 * px, s.a * shrink * breathe);
        e.b = std::max(1.5 * px, s.b * shrink * breathe);
        e.x0 = s.x0 + s.drift_x.at(z) * px;
        e.y0 = s.y0 + s.drift_y.at(z) * px;
        e.phi = s.phi;
        out.push_back(e);
    }
    return out;
}

}  // namespace

Image shepp_logan(int size) {
    require(size >= 16, "shepp_logan: size too small");
    return rasterize(std::vector<Ellipse>(std::begin(kSheppLogan), std::end(kSheppLogan)), size);
}

PhantomVolume make_phantom_volume(PhantomKind kind, int size, int depth, double coherence_scale,
                                  uint64_t seed) {
    require(size >= 32, "make_phantom_volume: size must be >= 32");
    require(depth >= 2, "make_phantom_volume: depth must be >= 2");
    require(coherence_scale >= 0.0, "make_phantom_volume: negative coherence_scale");

    Rng rng(Rng::mix(seed, 0x51CE5));
    std::vector<Ellipsoid3d> solids;

    auto add_drifts = [&](Ellipsoid3d& s, double center_budget, double radius_budget) {
        s.drift_x = Drift::make(rng, center_budget, size / 10.0, depth);
        s.drift_y = Drift::make(rng, center_budget, size / 10.0, depth);
        s.drift_r = Drift::make(rng, radius_budget, size / 16.0, depth);
    };

    // split the per-slice deformation budget between translation and breathing
    const double center_budget = 0.7 * coherence_scale;
    const double radius_budget = 0.3 * coherence_scale;

    if (kind == PhantomKind::SheppLogan3d) {
        for (const Ellipse& e : kSheppLogan) {
            Ellipsoid3d s;
            s.value = e.value;
            s.a = e.a;
            s.b = e.b;
            s.c = depth * (0.55 + 0.4 * std::min(e.a, e.b));  // big solids span the stack
            s.x0 = e.x0;
            s.y0 = e.y0;
            s.z0 = depth * 0.5;
            s.phi = e.phi;
            add_drifts(s, center_budget, radius_budget);
            solids.push_back(s);
        }
    } else {
        // body outline: a large soft disk present in every slice
        Ellipsoid3d body;
        body.value = 0.85;
        body.a = rng.uniform(0.75, 0.88);
        body.b = rng.uniform(0.75, 0.88);
        body.c = depth * 4.0;
        body.x0 = 0.0;
        body.y0 = 0.0;
        body.z0 = depth * 0.5;
        body.phi = 0.0;
        add_drifts(body, center_budget * 0.5, radius_budget);
        solids.push_back(body);

        const int n_inner = 5 + static_cast<int>(rng.next_u64() % 4);
        for (int i = 0; i < n_inner; ++i) {
            Ellipsoid3d s;
            s.value = (i % 2 == 0 ? -1.0 : 1.0) * rng.uniform(0.15, 0.45);
            s.a = rng.uniform(0.06, 0.30);
            s.b = rng.uniform(0.06, 0.30);
            s.c = rng.uniform(0.4, 1.4) * depth;
            const double r = rng.uniform(0.0, 0.5);
            const double th = rng.uniform(0.0, 2.0 * kPi);
            s.x0 = r * std::cos(th);
            s.y0 = r * std::sin(th);
            s.z0 = rng.uniform(0.15, 0.85) * depth;
            s.phi = rng.uniform(0.0, kPi);
            add_drifts(s, center_budget, radius_budget);
            solids.push_back(s);
        }
    }

    PhantomVolume vol;
    vol.depth = depth;
    vol.coherence_scale = coherence_scale;
    vol.slices.reserve(depth);
    for (int z = 0; z < depth; ++z) {
        // the zero-deformation limit freezes the stack at the center cut
        const int z_eff = coherence_scale == 0.0 ? depth / 2 : z;
        vol.slices.push_back(rasterize(cross_section(solids, z_eff, size), size));
    }
    return vol;
}

std::vector<SliceBatch> assemble_batches(const std::vector<Image>& s,
                                         const std::vector<Image>& x) {
    require(s.size() == x.size() && !s.empty(), "assemble_batches: inconsistent slice lists");
    const int n = static_cast<int>(s.size());
    std::vector<SliceBatch> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        SliceBatch b;
        b.index = i;
        b.s = s[i];
        b.target = x[i];
        if (n == 1) {
            b.neighbors.slices.push_back(s[0]);  // degenerate: self-neighbor
        } else {
            if (i > 0) b.neighbors.slices.push_back(s[i - 1]);
            if (i + 1 < n) b.neighbors.slices.push_back(s[i + 1]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Image> simulate_recoveries(const PhantomVolume& vol, const DatasetSpec& spec) {
    require(vol.depth == static_cast<int>(vol.slices.size()) && vol.depth >= 1,
            "simulate_recoveries: bad volume");
    require(!vol.slices.empty() && vol.slices[0].height == spec.image_size &&
                vol.slices[0].width == spec.image_size,
            "simulate_recoveries: volume does not match spec.image_size");
    const ScanGeometry geom =
        ScanGeometry::uniform(spec.n_views, spec.n_detectors, spec.image_size);

    std::vector<Image> recoveries(vol.depth);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < vol.depth; ++i) {
        Sinogram y = tomo::forward_project(vol.slices[i], geom);
        if (spec.sigma > 0.0)
            y = tomo::add_noise(y, NoiseSpec(spec.sigma, Rng::mix(spec.seed, i)));
        recoveries[i] = tomo::fbp(y, geom, spec.window);
    }
    return recoveries;
}

Dataset build_dataset(const PhantomVolume& vol, const DatasetSpec& spec) {
    require(spec.split_fraction >= 0.0 && spec.split_fraction <= 1.0,
            "build_dataset: split_fraction out of range");
    const std::vector<Image> recoveries = simulate_recoveries(vol, spec);

    const int n_train = static_cast<int>(std::lround(spec.split_fraction * vol.depth));
    Dataset ds;
    if (n_train > 0) {
        std::vector<Image> s_block(recoveries.begin(), recoveries.begin() + n_train);
        std::vector<Image> x_block(vol.slices.begin(), vol.slices.begin() + n_train);
        ds.train = assemble_batches(s_block, x_block);
    }
    if (n_train < vol.depth) {
        std::vector<Image> s_block(recoveries.begin() + n_train, recoveries.end());
        std::vector<Image> x_block(vol.slices.begin() + n_train, vol.slices.end());
        ds.val = assemble_batches(s_block, x_block);
    }
    return ds;
}

PhantomVolume load_raw_volume(const std::filesystem::path& path, int depth, int height, int width,
                              io::Dtype dtype) {
    require(depth >= 1 && height >= 1 && width >= 1, "load_raw_volume: bad dims");
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw io::io_error("load_raw_volume: cannot open " + path.string());
    const size_t elem = dtype == io::Dtype::f32 ? 4 : 8;
    const size_t expect =
        static_cast<size_t>(depth) * height * width * elem;
    const size_t actual = static_cast<size_t>(f.tellg());
    if (actual != expect)
        throw io::io_error("load_raw_volume: size mismatch for " + path.string() + " (expected " +
                           std::to_string(expect) + " bytes, found " + std::to_string(actual) +
                           ")");
    f.seekg(0);
    const size_t n = static_cast<size_t>(depth) * height * width;
    std::vector<double> vals(n);
    if (dtype == io::Dtype::f32) {
        std::vector<float> buf(n);
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
        for (size_t i = 0; i < n; ++i) vals[i] = buf[i];
    } else {
        f.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(n * 8));
    }
    if (!f) throw io::io_error("load_raw_volume: read failed for " + path.string());

    double lo = vals[0], hi = vals[0];
    for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    PhantomVolume vol;
    vol.depth = depth;
    vol.slices.reserve(depth);
    for (int z = 0; z < depth; ++z) {
        Image img(height, width);
        const double* src = vals.data() + static_cast<size_t>(z) * height * width;
        if (span > 0.0)
            for (size_t i = 0; i < img.size(); ++i) img.data[i] = (src[i] - lo) / span;
        // min = max: leave all zeros
        vol.slices.push_back(std::move(img));
    }
    return vol;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    nlohmann::json j;
    j["format"] = "ctlc-dataset";
    j["version"] = 1;
    j["seed"] = m.seed;
    j["spec"] = {{"n_views", m.spec.n_views},
                 {"n_detectors", m.spec.n_detectors},
                 {"sigma", m.spec.sigma},
                 {"image_size", m.spec.image_size},
                 {"depth", m.spec.depth},
                 {"seed", m.spec.seed},
                 {"split_fraction", m.spec.split_fraction},
                 {"window", m.spec.window == tomo::FilterWindow::Hann ? "hann" : "ramp"}};
    j["volumes"] = nlohmann::json::array();
    for (const auto& v : m.volumes) {
        j["volumes"].push_back(
            {{"role", v.role}, {"s", v.s_paths}, {"x", v.x_paths}});
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io::io_error("cannot write manifest: " + path.string());
    f << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw io::io_error("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io::io_error("malformed manifest " + path.string() + ": " + e.what());
    }
    try {
        Manifest m;
        m.seed = j.at("seed").get<uint64_t>();
        const auto& s = j.at("spec");
        m.spec.n_views = s.at("n_views").get<int>();
        m.spec.n_detectors = s.at("n_detectors").get<int>();
        m.spec.sigma = s.at("sigma").get<double>();
        m.spec.image_size = s.at("image_size").get<int>();
        m.spec.depth = s.at("depth").get<int>();
        m.spec.seed = s.at("seed").get<uint64_t>();
        m.spec.split_fraction = s.at("split_fraction").get<double>();
        m.spec.window = s.at("window").get<std::string>() == "hann" ? tomo::FilterWindow::Hann
                                                                    : tomo::FilterWindow::Ramp;
        for (const auto& v : j.at("volumes")) {
            VolumeEntry e;
            e.role = v.at("role").get<std::string>();
            e.s_paths = v.at("s").get<std::vector<std::string>>();
            e.x_paths = v.at("x").get<std::vector<std::string>>();
            if (e.s_paths.size() != e.x_paths.size() || e.s_paths.empty())
                throw io::io_error("manifest volume with inconsistent slice lists");
            if (e.role != "train" && e.role != "val")
                throw io::io_error("manifest volume with unknown role: " + e.role);
            m.volumes.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw io::io_error("manifest " + path.string() + " missing fields: " + e.what());
    }
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    const Manifest m = read_manifest(manifest_path);
    const auto dir = manifest_path.parent_path();
    Dataset ds;
    for (const auto& v : m.volumes) {
        std::vector<Image> s, x;
        s.reserve(v.s_paths.size());
        x.reserve(v.x_paths.size());
        for (size_t i = 0; i < v.s_paths.size(); ++i) {
            s.push_back(io::load_image(dir / v.s_paths[i]));
            x.push_back(io::load_image(dir / v.x_paths[i]));
        }
        auto batches = assemble_batches(s, x);
        auto& dst = (v.role == "val") ? ds.val : ds.train;
        dst.insert(dst.end(), std::make_move_iterator(batches.begin()),
                   std::make_move_iterator(batches.end()));
    }
    return ds;
}

}  // namespace ctlc::sim
