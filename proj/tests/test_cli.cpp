#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ctlc/config.hpp"
#include "ctlc/io.hpp"
#include "ctlc/sim.hpp"

using namespace ctlc;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
    const auto d = fs::temp_directory_path() / "ctlc_test_cli";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

cli::RunConfig tiny_sim_config(const fs::path& out, uint64_t seed, double sigma = 0.4) {
    cli::RunConfig cfg;
    cfg.apply_override("sim.out=" + out.string());
    cfg.apply_override("sim.size=32");
    cfg.apply_override("sim.depth=4");
    cfg.apply_override("sim.n_views=24");
    cfg.apply_override("sim.n_detectors=48");
    cfg.apply_override("sim.sigma=" + std::to_string(sigma));
    cfg.apply_override("sim.seed=" + std::to_string(seed));
    cfg.apply_override("sim.volumes_train=2");
    cfg.apply_override("sim.volumes_val=1");
    return cfg;
}

}  // namespace

TEST_CASE("config file parsing with sections, comments, and overrides") {
    const auto p = temp_root() / "cfg.ini";
    {
        std::ofstream f(p);
        f << "# comment\n[train]\nepochs = 7\nlr = 1e-3  # inline\n\n[sim]\nsize=48\n";
    }
    cli::RunConfig cfg;
    cfg.load_file(p);
    CHECK(cfg.get_int("train.epochs", 0) == 7);
    CHECK(cfg.get_double("train.lr", 0.0) == doctest::Approx(1e-3));
    CHECK(cfg.get_int("sim.size", 0) == 48);

    cfg.apply_override("train.epochs=9");
    CHECK(cfg.get_int("train.epochs", 0) == 9);

    CHECK_THROWS_AS(cfg.apply_override("no_equals"), cli::config_error);
    CHECK(cfg.get_int("sim.size2", 5) == 5);  // absent key: fallback
    cfg.apply_override("sim.size2=abc");
    CHECK_THROWS_AS(cfg.get_int("sim.size2", 0), cli::config_error);
}

TEST_CASE("environment variables override file values") {
    ::setenv("CTLC_TRAIN_EPOCHS", "12", 1);
    cli::RunConfig cfg;
    cfg.apply_override("train.epochs=1");
    cfg.apply_env();
    CHECK(cfg.get_int("train.epochs", 0) == 12);
    ::unsetenv("CTLC_TRAIN_EPOCHS");
}

TEST_CASE("simulate writes a complete dataset and is idempotent per seed") {
    const auto out = temp_root() / "ds_a";
    fs::remove_all(out);
    CHECK(cli::cmd_simulate(tiny_sim_config(out, 11)) == cli::kExitOk);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "vol00" / "s_000.ctlc"));
    CHECK(fs::exists(out / "vol02" / "x_003.ctlc"));
    CHECK(!fs::exists(out / ".ctlc.lock"));  // lock released

    const auto m = sim::read_manifest(out / "manifest.json");
    REQUIRE(m.volumes.size() == 3);
    CHECK(m.volumes[0].role == "train");
    CHECK(m.volumes[2].role == "val");

    const std::string manifest_a = slurp(out / "manifest.json");
    const std::string slice_a = slurp(out / "vol00" / "s_000.ctlc");
    const auto out2 = temp_root() / "ds_b";
    fs::remove_all(out2);
    CHECK(cli::cmd_simulate(tiny_sim_config(out2, 11)) == cli::kExitOk);
    CHECK(slurp(out2 / "vol00" / "s_000.ctlc") == slice_a);
    // manifests differ only in relative paths' root, which stays relative:
    CHECK(slurp(out2 / "manifest.json") == manifest_a);
}

TEST_CASE("noiseless datasets record sigma 0 in the manifest") {
    const auto out = temp_root() / "ds_clean";
    fs::remove_all(out);
    CHECK(cli::cmd_simulate(tiny_sim_config(out, 5, 0.0)) == cli::kExitOk);
    const auto m = sim::read_manifest(out / "manifest.json");
    CHECK(m.spec.sigma == 0.0);
}

TEST_CASE("a held lock blocks a second simulate into the same directory") {
    const auto out = temp_root() / "ds_locked";
    fs::remove_all(out);
    fs::create_directories(out);
    {
        std::ofstream f(out / ".ctlc.lock");
        f << "held\n";
    }
    CHECK(cli::cmd_simulate(tiny_sim_config(out, 3)) == cli::kExitConfig);
    fs::remove(out / ".ctlc.lock");
}

TEST_CASE("train smoke run: one epoch, metrics emitted, flow mode recorded") {
    const auto data = temp_root() / "ds_train";
    fs::remove_all(data);
    REQUIRE(cli::cmd_simulate(tiny_sim_config(data, 21)) == cli::kExitOk);

    const auto run = temp_root() / "run_a";
    fs::remove_all(run);
    cli::RunConfig cfg;
    cfg.apply_override("train.data=" + (data / "manifest.json").string());
    cfg.apply_override("train.out=" + run.string());
    cfg.apply_override("train.epochs=1");
    cfg.apply_override("train.batch_size=2");
    cfg.apply_override("train.hs_iters=20");
    cfg.apply_override("train.seed=4");
    CHECK(cli::cmd_train(cfg) == cli::kExitOk);
    const std::string csv = slurp(run / "metrics.csv");
    CHECK(csv.find("# flow=classic") == 0);
    CHECK(csv.find("epoch,d_loss,pixel,adv,percept,val_psnr,val_ssim") != std::string::npos);

    // resume continues the epoch counter
    cfg.apply_override("train.resume=" + run.string());
    cfg.apply_override("train.epochs=1");
    CHECK(cli::cmd_train(cfg) == cli::kExitOk);
    const std::string csv2 = slurp(run / "metrics.csv");
    CHECK(csv2.find("\n2,") != std::string::npos);
}

TEST_CASE("train distinguishes missing manifest from bad config") {
    cli::RunConfig cfg;
    cfg.apply_override("train.data=/nonexistent/manifest.json");
    CHECK(cli::cmd_train(cfg) == cli::kExitMissing);

    const auto data = temp_root() / "ds_train";  // exists from the previous case
    cli::RunConfig bad;
    bad.apply_override("train.data=" + (data / "manifest.json").string());
    bad.apply_override("train.epochs=0");
    CHECK(cli::cmd_train(bad) == cli::kExitConfig);
    cli::RunConfig bad2;
    bad2.apply_override("train.data=" + (data / "manifest.json").string());
    bad2.apply_override("train.flow=magic");
    CHECK(cli::cmd_train(bad2) == cli::kExitConfig);
}

TEST_CASE("eval: fbp-only needs no checkpoint, GAN methods do") {
    const auto data = temp_root() / "ds_train";
    const auto out = temp_root() / "eval_fbp";
    fs::remove_all(out);
    cli::RunConfig cfg;
    cfg.apply_override("eval.data=" + (data / "manifest.json").string());
    cfg.apply_override("eval.out=" + out.string());
    cfg.apply_override("eval.methods=fbp");
    CHECK(cli::cmd_eval(cfg) == cli::kExitOk);
    const std::string summary = slurp(out / "summary.csv");
    CHECK(summary.find("method,psnr@24/48/0.4") == 0);
    CHECK(summary.find("\nfbp,") != std::string::npos);

    cli::RunConfig need_ckpt;
    need_ckpt.apply_override("eval.data=" + (data / "manifest.json").string());
    need_ckpt.apply_override("eval.out=" + out.string());
    need_ckpt.apply_override("eval.methods=fbp,gan-lc");
    CHECK(cli::cmd_eval(need_ckpt) == cli::kExitConfig);
}

TEST_CASE("eval with a trained checkpoint emits the full method table") {
    const auto data = temp_root() / "ds_train";
    const auto run = temp_root() / "run_a";  // trained above
    const auto out = temp_root() / "eval_full";
    fs::remove_all(out);
    cli::RunConfig cfg;
    cfg.apply_override("eval.data=" + (data / "manifest.json").string());
    cfg.apply_override("eval.out=" + out.string());
    cfg.apply_override("eval.checkpoint=" + run.string());
    cfg.apply_override("eval.size=32");
    cfg.apply_override("eval.hs_iters=20");
    CHECK(cli::cmd_eval(cfg) == cli::kExitOk);
    const std::string summary = slurp(out / "summary.csv");
    for (const char* m : {"fbp", "gan-nolc", "gan-lc"})
        CHECK(summary.find(std::string("\n") + m + ",") != std::string::npos);
    CHECK(fs::exists(out / "recon_set0_gan-lc" / "val_000.ctlc"));
    CHECK(fs::exists(out / "slices_fbp_set0.csv"));
}

TEST_CASE("plot consumes eval outputs and emits montages plus sweep figures") {
    const auto data = temp_root() / "ds_train";
    const auto evald = temp_root() / "eval_full";
    const auto figs = temp_root() / "figures";
    fs::remove_all(figs);
    cli::RunConfig cfg;
    cfg.apply_override("plot.eval=" + evald.string());
    cfg.apply_override("plot.out=" + figs.string());
    cfg.apply_override("plot.data=" + (data / "manifest.json").string());
    cfg.apply_override("plot.debug_flow=1");
    CHECK(cli::cmd_plot(cfg) == cli::kExitOk);
    CHECK(fs::exists(figs / "psnr_vs_views.png"));
    CHECK(fs::exists(figs / "ssim_vs_views.png"));
    // one montage per validation slice (the val volume has 4)
    int montages = 0;
    for (const auto& e : fs::directory_iterator(figs))
        if (e.path().filename().string().rfind("montage_", 0) == 0) ++montages;
    CHECK(montages == 4);
    CHECK(fs::exists(figs / "flow_magnitude.png"));
    CHECK(fs::exists(figs / "flow_arrows.png"));

    cli::RunConfig missing;
    missing.apply_override("plot.eval=/nonexistent_eval");
    CHECK(cli::cmd_plot(missing) == cli::kExitMissing);
}
