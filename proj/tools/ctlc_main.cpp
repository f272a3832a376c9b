#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctlc/config.hpp"

namespace {

// Shared flags: config file, --set overrides, and a few common shortcuts that
// map onto config keys.
struct CommonOpts {
    std::string config_file;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("-c,--config", o.config_file, "key = value config file with [sections]");
    cmd->add_option("--set", o.sets, "override a field, e.g. --set train.epochs=3")
        ->take_all();
}

int build_config(const CommonOpts& o, ctlc::cli::RunConfig& cfg) {
    try {
        if (!o.config_file.empty()) cfg.load_file(o.config_file);
        cfg.apply_env();
        for (const auto& s : o.sets) cfg.apply_override(s);
    } catch (const ctlc::cli::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return ctlc::cli::kExitConfig;
    }
    return ctlc::cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"low-dose CT reconstruction: simulate, train, eval, plot"};
    app.require_subcommand(1);

    CommonOpts sim_o, train_o, eval_o, plot_o;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic low-dose dataset");
    add_common(sim, sim_o);
    std::string sim_out, sim_seed, sim_sigma;
    sim->add_option("-o,--out", sim_out, "output dataset directory");
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--sigma", sim_sigma, "sinogram noise standard deviation");

    auto* train = app.add_subcommand("train", "train the reconstruction networks");
    add_common(train, train_o);
    std::string train_data, train_out, train_resume, train_flow, train_epochs, train_seed;
    train->add_option("-d,--data", train_data, "dataset manifest.json");
    train->add_option("-o,--out", train_out, "run output directory");
    train->add_option("--resume", train_resume, "resume from a run directory");
    train->add_option("--flow", train_flow, "flow estimator: classic | learned");
    train->add_option("--epochs", train_epochs, "epoch count");
    train->add_option("--seed", train_seed, "training seed");

    auto* eval = app.add_subcommand("eval", "evaluate reconstructions against ground truth");
    add_common(eval, eval_o);
    std::string eval_data, eval_out, eval_ckpt, eval_methods;
    eval->add_option("-d,--data", eval_data, "comma-separated dataset manifests");
    eval->add_option("-o,--out", eval_out, "evaluation output directory");
    eval->add_option("--checkpoint", eval_ckpt, "run directory holding last_gen.ckpt");
    eval->add_option("--methods", eval_methods, "subset of fbp,gan-nolc,gan-lc");

    auto* plot = app.add_subcommand("plot", "emit montages and metric-vs-views figures");
    add_common(plot, plot_o);
    std::string plot_eval, plot_out, plot_data;
    bool plot_debug_flow = false;
    plot->add_option("-e,--eval", plot_eval, "comma-separated eval output directories");
    plot->add_option("-o,--out", plot_out, "figure output directory");
    plot->add_option("-d,--data", plot_data, "dataset manifest for montage panels");
    plot->add_flag("--debug-flow", plot_debug_flow, "emit flow heat map and arrow overlay");

    CLI11_PARSE(app, argc, argv);

    ctlc::cli::RunConfig cfg;
    auto shortcut = [&cfg](const std::string& key, const std::string& v) {
        if (!v.empty()) cfg.apply_override(key + "=" + v);
    };

    if (sim->parsed()) {
        if (int rc = build_config(sim_o, cfg)) return rc;
        shortcut("sim.out", sim_out);
        shortcut("sim.seed", sim_seed);
        shortcut("sim.sigma", sim_sigma);
        return ctlc::cli::cmd_simulate(cfg);
    }
    if (train->parsed()) {
        if (int rc = build_config(train_o, cfg)) return rc;
        shortcut("train.data", train_data);
        shortcut("train.out", train_out);
        shortcut("train.resume", train_resume);
        shortcut("train.flow", train_flow);
        shortcut("train.epochs", train_epochs);
        shortcut("train.seed", train_seed);
        return ctlc::cli::cmd_train(cfg);
    }
    if (eval->parsed()) {
        if (int rc = build_config(eval_o, cfg)) return rc;
        shortcut("eval.data", eval_data);
        shortcut("eval.out", eval_out);
        shortcut("eval.checkpoint", eval_ckpt);
        shortcut("eval.methods", eval_methods);
        return ctlc::cli::cmd_eval(cfg);
    }
    if (plot->parsed()) {
        if (int rc = build_config(plot_o, cfg)) return rc;
        shortcut("plot.eval", plot_eval);
        shortcut("plot.out", plot_out);
        shortcut("plot.data", plot_data);
        if (plot_debug_flow) cfg.apply_override("plot.debug_flow=1");
        return ctlc::cli::cmd_plot(cfg);
    }
    return ctlc::cli::kExitConfig;
}
