#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctlc/config.hpp"
#include "ctlc/gan.hpp"
#include "ctlc/io.hpp"
#include "ctlc/metrics.hpp"
#include "ctlc/rng.hpp"
#include "ctlc/sim.hpp"

namespace ctlc::cli {

namespace {

namespace fs = std::filesystem;

/// Guards a manifest directory against concurrent writers.
class DirLock {
  public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".ctlc.lock") {
        if (fs::exists(path_))
            throw config_error("directory is locked by another run (stale? remove " +
                               path_.string() + ")");
        std::ofstream f(path_);
        f << "lock\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;

  private:
    fs::path path_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

sim::DatasetSpec spec_from_config(const RunConfig& cfg) {
    sim::DatasetSpec spec;
    spec.n_views = static_cast<int>(cfg.get_int("sim.n_views", 60));
    spec.n_detectors = static_cast<int>(cfg.get_int("sim.n_detectors", 96));
    spec.sigma = cfg.get_double("sim.sigma", 0.5);
    spec.image_size = static_cast<int>(cfg.get_int("sim.size", 64));
    spec.depth = static_cast<int>(cfg.get_int("sim.depth", 64));
    spec.seed = static_cast<uint64_t>(cfg.get_int("sim.seed", 0));
    spec.window = cfg.get_string("sim.window", "ramp") == "hann" ? tomo::FilterWindow::Hann
                                                                 : tomo::FilterWindow::Ramp;
    if (spec.n_views < 1 || spec.n_detectors < 1)
        throw config_error("sim.n_views and sim.n_detectors must be positive");
    if (spec.sigma < 0.0) throw config_error("sim.sigma must be >= 0");
    return spec;
}

gan::TrainConfig train_config(const RunConfig& cfg) {
    gan::TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("train.epochs", 50));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 2));
    tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", 0));
    tc.weights.lambda_pix = cfg.get_double("train.lambda_pix", 1.0);
    tc.weights.lambda_adv = cfg.get_double("train.lambda_adv", 0.01);
    tc.weights.lambda_per = cfg.get_double("train.lambda_per", 1e-6);
    tc.lr = cfg.get_double("train.lr", 2e-4);
    tc.beta1 = cfg.get_double("train.beta1", 0.5);
    tc.beta2 = cfg.get_double("train.beta2", 0.999);
    tc.hs_alpha = cfg.get_double("train.hs_alpha", 0.1);
    tc.hs_iters = static_cast<int>(cfg.get_int("train.hs_iters", 200));
    tc.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every", 10));
    tc.stop_psnr_gap = cfg.get_double("train.stop_psnr_gap", 0.0);
    tc.stop_ssim_gap = cfg.get_double("train.stop_ssim_gap", 0.0);
    tc.disable_warp = cfg.get_bool("train.disable_warp", false);
    tc.select_best_val = cfg.get_bool("train.select_best", false);
    const std::string mode = cfg.get_string("train.flow", "classic");
    if (mode == "classic")
        tc.flow_mode = gan::FlowMode::Classic;
    else if (mode == "learned")
        tc.flow_mode = gan::FlowMode::Learned;
    else
        throw config_error("train.flow must be 'classic' or 'learned', got '" + mode + "'");
    if (tc.epochs < 1) throw config_error("train.epochs must be >= 1");
    if (tc.batch_size < 1) throw config_error("train.batch_size must be >= 1");
    return tc;
}

int guard(const std::function<int()>& body) {
    try {
        return body();
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const io::io_error& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitMissing;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }
}

}  // namespace

int cmd_simulate(const RunConfig& cfg) {
    return guard([&]() {
        const fs::path out = cfg.get_string("sim.out", "dataset");
        const sim::DatasetSpec spec = spec_from_config(cfg);
        const int n_train_vols = static_cast<int>(cfg.get_int("sim.volumes_train", 8));
        const int n_val_vols = static_cast<int>(cfg.get_int("sim.volumes_val", 1));
        const double coherence = cfg.get_double("sim.coherence", 1.5);
        const std::string kind_s = cfg.get_string("sim.kind", "ellipsoids");
        if (kind_s != "ellipsoids" && kind_s != "shepp_logan_3d")
            throw config_error("sim.kind must be 'ellipsoids' or 'shepp_logan_3d'");
        const sim::PhantomKind kind = kind_s == "ellipsoids" ? sim::PhantomKind::Ellipsoids
                                                             : sim::PhantomKind::SheppLogan3d;
        if (n_train_vols < 0 || n_val_vols < 0 || n_train_vols + n_val_vols < 1)
            throw config_error("need at least one volume");

        fs::create_directories(out);
        DirLock lock(out);

        std::printf("simulate: (N_v, N_d, sigma) = (%d, %d, %g)\n", spec.n_views,
                    spec.n_detectors, spec.sigma);
        sim::Manifest manifest;
        manifest.spec = spec;
        manifest.seed = spec.seed;
        char buf[128];
        for (int v = 0; v < n_train_vols + n_val_vols; ++v) {
            const auto vol = sim::make_phantom_volume(kind, spec.image_size, spec.depth,
                                                      coherence, Rng::mix(spec.seed, 1000 + v));
            sim::DatasetSpec vspec = spec;
            vspec.seed = Rng::mix(spec.seed, 2000 + v);  // per-volume noise stream
            const auto recoveries = sim::simulate_recoveries(vol, vspec);

            std::snprintf(buf, sizeof buf, "vol%02d", v);
            const std::string vol_dir = buf;
            fs::create_directories(out / vol_dir);
            sim::VolumeEntry entry;
            entry.role = v < n_train_vols ? "train" : "val";
            for (int i = 0; i < spec.depth; ++i) {
                std::snprintf(buf, sizeof buf, "%s/s_%03d.ctlc", vol_dir.c_str(), i);
                entry.s_paths.push_back(buf);
                io::save_image(out / buf, recoveries[i]);
                std::snprintf(buf, sizeof buf, "%s/x_%03d.ctlc", vol_dir.c_str(), i);
                entry.x_paths.push_back(buf);
                io::save_image(out / buf, vol.slices[i]);
            }
            manifest.volumes.push_back(std::move(entry));
            std::printf("  %s (%s): %d slices\n", vol_dir.c_str(),
                        v < n_train_vols ? "train" : "val", spec.depth);
        }
        sim::write_manifest(out / "manifest.json", manifest);
        std::printf("wrote %s\n", (out / "manifest.json").string().c_str());
        return kExitOk;
    });
}

int cmd_train(const RunConfig& cfg) {
    return guard([&]() {
        const fs::path data = cfg.get_string("train.data", "dataset/manifest.json");
        const fs::path out = cfg.get_string("train.out", "run");
        if (!fs::exists(data)) throw io::io_error("dataset manifest not found: " + data.string());

        gan::TrainConfig tc = train_config(cfg);
        tc.out_dir = out;
        const std::string resume = cfg.get_string("train.resume", "");
        if (!resume.empty()) {
            if (!fs::exists(fs::path(resume) / "last_gen.ckpt"))
                throw io::io_error("resume checkpoint not found in " + resume);
            tc.resume_from = resume;
        }

        Dataset ds = sim::load_dataset(data);
        fs::create_directories(out);
        DirLock lock(out);
        try {
            const auto result = gan::train(ds, tc);
            std::printf("train: %d epochs, final val PSNR %.3f dB (FBP input %.3f dB)\n",
                        result.epochs_run,
                        result.log.empty() ? 0.0 : result.log.back().val_psnr,
                        result.input_val_psnr);
        } catch (const io::io_error& e) {
            // a malformed resume checkpoint is a configuration problem
            if (!resume.empty()) throw config_error(e.what());
            throw;
        }
        return kExitOk;
    });
}

namespace {

struct EvalSetting {
    std::string label;  // "N_v,N_d,sigma"
    int n_views = 0;
    std::vector<double> psnr_by_method, ssim_by_method;
};

}  // namespace

int cmd_eval(const RunConfig& cfg) {
    return guard([&]() {
        const auto datasets = split_list(cfg.get_string("eval.data", "dataset/manifest.json"));
        const fs::path out = cfg.get_string("eval.out", "eval");
        const auto methods = split_list(cfg.get_string("eval.methods", "fbp,gan-nolc,gan-lc"));
        const std::string ckpt_dir = cfg.get_string("eval.checkpoint", "");
        const double hs_alpha = cfg.get_double("eval.hs_alpha", 0.1);
        const int hs_iters = static_cast<int>(cfg.get_int("eval.hs_iters", 200));
        for (const auto& m : methods)
            if (m != "fbp" && m != "gan-nolc" && m != "gan-lc")
                throw config_error("unknown eval method: " + m);
        if (methods.empty()) throw config_error("eval.methods is empty");
        if (datasets.empty()) throw config_error("eval.data is empty");

        const bool needs_net = std::any_of(methods.begin(), methods.end(),
                                           [](const std::string& m) { return m != "fbp"; });
        nn::GeneratorNet gen;
        if (needs_net) {
            if (ckpt_dir.empty())
                throw config_error("eval.checkpoint is required for GAN methods");
            const fs::path ckpt = fs::path(ckpt_dir) / "last_gen.ckpt";
            if (!fs::exists(ckpt)) throw io::io_error("checkpoint not found: " + ckpt.string());
            int size = static_cast<int>(cfg.get_int("eval.size", 64));
            gen = nn::build_generator(std::max(32, size));
            auto params = gen.params();
            nn::load_checkpoint(ckpt, params);
        }

        fs::create_directories(out);
        std::vector<EvalSetting> settings;
        char buf[256];
        for (size_t di = 0; di < datasets.size(); ++di) {
            const fs::path manifest = datasets[di];
            if (!fs::exists(manifest))
                throw io::io_error("dataset manifest not found: " + manifest.string());
            const auto m = sim::read_manifest(manifest);
            Dataset ds = sim::load_dataset(manifest);
            auto& batches = ds.val.empty() ? ds.train : ds.val;
            if (batches.empty()) throw io::io_error("dataset has no slices: " + manifest.string());

            EvalSetting setting;
            std::snprintf(buf, sizeof buf, "%d/%d/%g", m.spec.n_views, m.spec.n_detectors,
                          m.spec.sigma);
            setting.label = buf;
            setting.n_views = m.spec.n_views;

            std::vector<Image> targets;
            for (const auto& b : batches) targets.push_back(b.target);

            for (const auto& method : methods) {
                std::vector<Image> recon;
                recon.reserve(batches.size());
                if (method == "fbp") {
                    for (const auto& b : batches) recon.push_back(b.s);
                } else {
                    const auto est = method == "gan-lc"
                                         ? gan::make_classic_estimator(hs_alpha, hs_iters)
                                         : gan::make_zero_estimator();
                    for (const auto& b : batches)
                        recon.push_back(gan::reconstruct(gen, est, b.s, b.neighbors));
                }
                const auto rep = metrics::evaluate(recon, targets);
                setting.psnr_by_method.push_back(rep.mean_psnr);
                setting.ssim_by_method.push_back(rep.mean_ssim);

                // per-slice report + reconstructions for later plotting
                std::vector<std::string> rows;
                for (size_t i = 0; i < recon.size(); ++i) {
                    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f", i, rep.psnr_db[i],
                                  rep.ssim[i]);
                    rows.emplace_back(buf);
                }
                std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f", rep.mean_psnr, rep.mean_ssim);
                rows.emplace_back(buf);
                std::snprintf(buf, sizeof buf, "slices_%s_set%zu.csv", method.c_str(), di);
                io::write_csv(out / buf, "slice,psnr,ssim", rows);

                const fs::path rdir =
                    out / ("recon_set" + std::to_string(di) + "_" + method);
                fs::create_directories(rdir);
                for (size_t i = 0; i < recon.size(); ++i) {
                    std::snprintf(buf, sizeof buf, "val_%03zu.ctlc", i);
                    io::save_image(rdir / buf, recon[i]);
                }
            }
            settings.push_back(std::move(setting));
        }

        // summary table: one row per method, PSNR and SSIM columns per setting
        std::string header = "method";
        for (const auto& s : settings) header += ",psnr@" + s.label + ",ssim@" + s.label;
        std::vector<std::string> rows;
        for (size_t mi = 0; mi < methods.size(); ++mi) {
            std::string row = methods[mi];
            for (const auto& s : settings) {
                std::snprintf(buf, sizeof buf, ",%.6f,%.6f", s.psnr_by_method[mi],
                              s.ssim_by_method[mi]);
                row += buf;
            }
            rows.push_back(std::move(row));
        }
        io::write_csv(out / "summary.csv", header, rows);
        std::printf("eval: wrote %s\n", (out / "summary.csv").string().c_str());
        return kExitOk;
    });
}

int cmd_plot(const RunConfig& cfg) {
    return guard([&]() {
        const auto eval_dirs = split_list(cfg.get_string("plot.eval", "eval"));
        const fs::path out = cfg.get_string("plot.out", "figures");
        const std::string data = cfg.get_string("plot.data", "");
        const bool debug_flow = cfg.get_bool("plot.debug_flow", false);
        if (eval_dirs.empty()) throw config_error("plot.eval is empty");
        fs::create_directories(out);

        // gather summaries: per eval dir, method -> (n_views, psnr, ssim)
        struct Point {
            double x, psnr, ssim;
        };
        std::map<std::string, std::vector<Point>> series;
        for (const auto& dir : eval_dirs) {
            const fs::path summary = fs::path(dir) / "summary.csv";
            if (!fs::exists(summary)) throw io::io_error("missing eval CSV: " + summary.string());
            std::ifstream f(summary);
            std::string header;
            std::getline(f, header);
            const auto cols = split_list(header);
            // columns look like psnr@N_v/N_d/sigma
            std::vector<double> views;
            for (size_t c = 1; c < cols.size(); c += 2) {
                const auto at = cols[c].find('@');
                views.push_back(std::stod(cols[c].substr(at + 1)));
            }
            std::string line;
            while (std::getline(f, line)) {
                const auto cells = split_list(line);
                if (cells.size() != cols.size()) continue;
                for (size_t s = 0; s < views.size(); ++s)
                    series[cells[0]].push_back(
                        {views[s], std::stod(cells[1 + 2 * s]), std::stod(cells[2 + 2 * s])});
            }
        }
        std::vector<io::PlotSeries> psnr_series, ssim_series;
        for (auto& [method, pts] : series) {
            std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
            io::PlotSeries p{method, {}, {}}, s{method, {}, {}};
            for (const auto& pt : pts) {
                p.x.push_back(pt.x);
                p.y.push_back(pt.psnr);
                s.x.push_back(pt.x);
                s.y.push_back(pt.ssim);
            }
            psnr_series.push_back(std::move(p));
            ssim_series.push_back(std::move(s));
        }
        io::write_line_plot(out / "psnr_vs_views.png", "PSNR VS VIEWS", "views", "PSNR (dB)",
                            psnr_series);
        io::write_line_plot(out / "ssim_vs_views.png", "SSIM VS VIEWS", "views", "SSIM",
                            ssim_series);

        // montages from the first eval dir, when the dataset is available
        if (!data.empty()) {
            if (!fs::exists(data)) throw io::io_error("dataset manifest not found: " + data);
            Dataset ds = sim::load_dataset(data);
            auto& batches = ds.val.empty() ? ds.train : ds.val;
            const fs::path edir = eval_dirs[0];
            char buf[128];
            for (size_t i = 0; i < batches.size(); ++i) {
                std::vector<const Image*> panels{&batches[i].s};
                std::vector<Image> owned;
                owned.reserve(4);
                for (const auto& method : {std::string("fbp"), std::string("gan-lc")}) {
                    std::snprintf(buf, sizeof buf, "recon_set0_%s/val_%03zu.ctlc",
                                  method.c_str(), i);
                    if (fs::exists(edir / buf)) owned.push_back(io::load_image(edir / buf));
                }
                for (const auto& im : owned) panels.push_back(&im);
                panels.push_back(&batches[i].target);
                std::snprintf(buf, sizeof buf, "montage_%03zu.png", i);
                io::write_png_gray(out / buf, io::montage_row(panels));
            }
            if (debug_flow && batches.size() >= 2) {
                const auto motion = flow::estimate_flow(batches[0].s, batches[1].s);
                io::write_flow_heatmap(out / "flow_magnitude.png", motion);
                io::write_flow_arrows(out / "flow_arrows.png", batches[1].s, motion);
            }
        }
        std::printf("plot: wrote figures under %s\n", out.string().c_str());
        return kExitOk;
    });
}

}  // namespace ctlc::cli
