#include "ctlc/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ctlc/io.hpp"
#include "ctlc/metrics.hpp"
#include "ctlc/rng.hpp"

namespace ctlc::gan {

using nn::TensorPtr;

namespace {

TensorPtr stack3(const Image& s, const Image& pred, const Image& succ) {
    auto t = nn::Tensor::create({1, 3, s.height, s.width});
    const size_t plane = s.size();
    std::copy(s.data.begin(), s.data.end(), t->data.begin());
    std::copy(pred.data.begin(), pred.data.end(), t->data.begin() + plane);
    std::copy(succ.data.begin(), succ.data.end(), t->data.begin() + 2 * plane);
    return t;
}

// Builds the phase-2 generator input for one slice from already-warped
// generated neighbors; a missing side duplicates the present one.
TensorPtr coherence_input(const Image& s, const std::vector<Image>& warped) {
    require(warped.size() == 1 || warped.size() == 2, "coherence_input: need 1 or 2 neighbors");
    if (warped.size() == 2) return stack3(s, warped[0], warped[1]);
    return stack3(s, warped[0], warped[0]);
}

struct SliceFlows {
    std::vector<FlowField> motions;  // one per neighbor, neighbor -> current
};

std::vector<Image> warp_generated(const NeighborSet& generated, const SliceFlows& flows) {
    std::vector<Image> out;
    out.reserve(generated.size());
    for (size_t k = 0; k < generated.size(); ++k)
        out.push_back(flow::align_to_current(generated.slices[k], flows.motions[k]));
    return out;
}

SliceFlows estimate_slice_flows(const FlowEstimator& f_est, const Image& s,
                                const NeighborSet& neighbors) {
    SliceFlows f;
    f.motions.reserve(neighbors.size());
    for (const Image& nb : neighbors.slices) f.motions.push_back(f_est(nb, s));
    return f;
}

// Phase 2 with the autograd graph attached (training path).
TensorPtr reconstruct_graph(const nn::GeneratorNet& g, const Image& s,
                            const NeighborSet& neighbors, const SliceFlows& flows) {
    NeighborSet generated;
    {
        nn::NoGradGuard ng;
        generated = generate_neighbors(g, neighbors);
    }
    const auto warped = warp_generated(generated, flows);
    auto in = coherence_input(s, warped);
    return g.forward(in);
}

TensorPtr image_batch(const std::vector<Image>& imgs) {
    std::vector<TensorPtr> xs;
    xs.reserve(imgs.size());
    for (const auto& im : imgs) xs.push_back(nn::Tensor::from_image(im));
    return nn::concat_batch(xs);
}

}  // namespace

FlowEstimator make_classic_estimator(double alpha, int iters) {
    return [alpha, iters](const Image& neighbor, const Image& current) {
        return flow::estimate_flow(neighbor, current, alpha, iters);
    };
}

FlowEstimator make_zero_estimator() {
    return [](const Image& neighbor, const Image&) {
        return FlowField(neighbor.height, neighbor.width);
    };
}

NeighborSet generate_neighbors(const nn::GeneratorNet& g, const NeighborSet& neighbors) {
    require(neighbors.size() == 1 || neighbors.size() == 2,
            "generate_neighbors: neighbor set must hold 1 or 2 slices");
    NeighborSet out;
    out.slices.reserve(neighbors.size());
    for (const Image& nb : neighbors.slices) {
        auto in = stack3(nb, nb, nb);  // self-fill: no coherence input in phase 1
        out.slices.push_back(g.forward(in)->to_image());
    }
    return out;
}

Image reconstruct(const nn::GeneratorNet& g, const FlowEstimator& f_est, const Image& s,
                  const NeighborSet& neighbors) {
    nn::NoGradGuard ng;
    const auto flows = estimate_slice_flows(f_est, s, neighbors);
    return reconstruct_graph(g, s, neighbors, flows)->to_image();
}

std::vector<Image> infer_volume(const nn::GeneratorNet& g, const FlowEstimator& f_est,
                                const std::vector<Image>& slices) {
    require(!slices.empty(), "infer_volume: empty input");
    nn::NoGradGuard ng;
    const int n = static_cast<int>(slices.size());

    // phase 1 once per slice; every consumer reuses the same generated image
    std::vector<Image> phase1(n);
    for (int i = 0; i < n; ++i) {
        auto in = stack3(slices[i], slices[i], slices[i]);
        phase1[i] = g.forward(in)->to_image();
    }

    std::vector<Image> out(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        std::vector<int> nb_idx;
        if (n == 1) {
            nb_idx = {0};
        } else {
            if (i > 0) nb_idx.push_back(i - 1);
            if (i + 1 < n) nb_idx.push_back(i + 1);
        }
        std::vector<Image> warped;
        warped.reserve(nb_idx.size());
        for (int j : nb_idx) {
            const FlowField motion = f_est(slices[j], slices[i]);
            warped.push_back(flow::align_to_current(phase1[j], motion));
        }
        auto in = coherence_input(slices[i], warped);
        out[i] = g.forward(in)->to_image();
    }
    return out;
}

// ---- objectives ------------------------------------------------------------------

TensorPtr d_loss_from_scores(const TensorPtr& real_scores, const TensorPtr& fake_scores) {
    auto real_term = nn::log_elem(nn::clamp(real_scores, kScoreEps, 1.0 - kScoreEps));
    auto fake_term = nn::log_elem(
        nn::affine(nn::clamp(fake_scores, kScoreEps, 1.0 - kScoreEps), -1.0, 1.0));
    return nn::affine(nn::add(nn::sum_all(real_term), nn::sum_all(fake_term)), -1.0, 0.0);
}

TensorPtr d_loss_graph(const nn::DiscriminatorNet& d, const TensorPtr& real,
                       const TensorPtr& fake_detached) {
    return d_loss_from_scores(d.forward(real), d.forward(fake_detached));
}

TensorPtr perceptual_from_taps(const std::array<TensorPtr, 3>& taps_r,
                               const std::array<TensorPtr, 3>& taps_g) {
    TensorPtr total;
    for (int j = 0; j < 3; ++j) {
        auto term = nn::sum_all(nn::abs_elem(nn::sub(taps_r[j], taps_g[j])));
        total = total ? nn::add(total, term) : term;
    }
    return total;
}

GenLossGraph g_loss_graph(const nn::DiscriminatorNet& d, const TensorPtr& x_g,
                          const TensorPtr& x_r, const LossWeights& w) {
    require(x_g->shape == x_r->shape, "g_loss_graph: batch shape mismatch");
    require(w.lambda_pix > 0.0 && w.lambda_adv > 0.0 && w.lambda_per > 0.0,
            "g_loss_graph: loss weights must be positive");
    GenLossGraph out;
    auto diff = nn::sub(x_g, x_r);
    out.pixel = nn::mean_all(nn::mul(diff, diff));

    auto fake = d.forward_taps(x_g);
    auto fake_score = nn::clamp(fake.score, kScoreEps, 1.0 - kScoreEps);
    out.adv = nn::affine(nn::sum_all(nn::log_elem(fake_score)), -1.0, 0.0);

    std::array<TensorPtr, 3> taps_r;
    {
        nn::NoGradGuard ng;  // real features are constants for the generator
        taps_r = d.forward_taps(x_r).taps;
    }
    out.percept = perceptual_from_taps(taps_r, fake.taps);

    out.total = nn::add(nn::add(nn::affine(out.pixel, w.lambda_pix, 0.0),
                                nn::affine(out.adv, w.lambda_adv, 0.0)),
                        nn::affine(out.percept, w.lambda_per, 0.0));
    return out;
}

double loss_discriminator(const nn::DiscriminatorNet& d, const std::vector<Image>& real,
                          const std::vector<Image>& fake) {
    require(!real.empty() && !fake.empty(), "loss_discriminator: empty batch");
    nn::NoGradGuard ng;
    return d_loss_graph(d, image_batch(real), image_batch(fake))->data[0];
}

GenLossValues loss_generator(const nn::DiscriminatorNet& d, const std::vector<Image>& x_g,
                             const std::vector<Image>& x_r, const LossWeights& w) {
    require(!x_g.empty() && x_g.size() == x_r.size(), "loss_generator: mismatched batch sizes");
    nn::NoGradGuard ng;
    auto g = g_loss_graph(d, image_batch(x_g), image_batch(x_r), w);
    return {g.total->data[0], g.pixel->data[0], g.adv->data[0], g.percept->data[0]};
}

double loss_perceptual(const nn::DiscriminatorNet& d, const std::vector<Image>& x_r,
                       const std::vector<Image>& x_g) {
    require(!x_r.empty() && x_r.size() == x_g.size(), "loss_perceptual: mismatched batch sizes");
    nn::NoGradGuard ng;
    const auto taps_r = d.forward_taps(image_batch(x_r)).taps;
    const auto taps_g = d.forward_taps(image_batch(x_g)).taps;
    return perceptual_from_taps(taps_r, taps_g)->data[0];
}

// ---- training --------------------------------------------------------------------

std::string metrics_csv_header() {
    return "epoch,d_loss,pixel,adv,percept,val_psnr,val_ssim";
}

std::vector<std::string> metrics_csv_rows(const std::vector<EpochLog>& log) {
    std::vector<std::string> rows;
    rows.reserve(log.size());
    char buf[256];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e,%.9e,%.9e,%.6f,%.6f", e.epoch, e.d_loss,
                      e.pixel, e.adv, e.percept, e.val_psnr, e.val_ssim);
        rows.emplace_back(buf);
    }
    return rows;
}

namespace {

struct FlowCache {
    std::vector<SliceFlows> per_batch;
};

FlowCache build_flow_cache(const std::vector<SliceBatch>& batches, const FlowEstimator& f_est) {
    FlowCache c;
    c.per_batch.resize(batches.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < batches.size(); ++i)
        c.per_batch[i] = estimate_slice_flows(f_est, batches[i].s, batches[i].neighbors);
    return c;
}

void write_montages(const std::filesystem::path& dir, const std::vector<SliceBatch>& val,
                    const std::vector<Image>& recon) {
    std::filesystem::create_directories(dir);
    char name[64];
    for (size_t i = 0; i < val.size(); ++i) {
        const Image m = io::montage_row({&val[i].s, &recon[i], &val[i].target});
        std::snprintf(name, sizeof name, "val_%03zu.png", i);
        io::write_png_gray(dir / name, m);
    }
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    require(!ds.train.empty(), "train: empty dataset");
    require(cfg.epochs >= 1 && cfg.batch_size >= 1, "train: bad epochs/batch_size");
    const int size = ds.train[0].s.height;
    require(ds.train[0].s.width == size, "train: slices must be square");

    // the builders take a power-of-two size tag; the nets themselves run on
    // any extent divisible by 8
    int build_size = 32;
    while (build_size < size) build_size *= 2;
    TrainResult r;
    r.gen = nn::build_generator(build_size, Rng::mix(cfg.seed, 1));
    r.disc = nn::build_discriminator(build_size, Rng::mix(cfg.seed, 2));
    r.flownet = nn::build_flownet(build_size, Rng::mix(cfg.seed, 3));

    auto g_params = r.gen.params();
    auto d_params = r.disc.params();
    auto f_params = r.flownet.params();
    nn::Adam g_opt{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, {}};
    nn::Adam d_opt{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, {}};
    nn::Adam f_opt{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, {}};

    int start_epoch = 0;
    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    // flow plumbing: frozen classic estimator (cached flows), zero-flow
    // ablation, or the co-trained estimator
    const bool ablation = cfg.disable_warp;
    FlowEstimator frozen_est = ablation ? make_zero_estimator()
                                        : make_classic_estimator(cfg.hs_alpha, cfg.hs_iters);
    FlowEstimator live_est;
    if (cfg.flow_mode == FlowMode::Learned && !ablation) {
        const nn::FlowNetLite* fn = &r.flownet;
        live_est = [fn](const Image& a, const Image& b) {
            return flow::estimate_flow_learned(a, b, *fn);
        };
    } else {
        live_est = frozen_est;
    }

    FlowCache train_flows, val_flows;
    const bool cache_flows = cfg.flow_mode == FlowMode::Classic || ablation;
    if (cache_flows) {
        train_flows = build_flow_cache(ds.train, frozen_est);
        if (!ds.val.empty()) val_flows = build_flow_cache(ds.val, frozen_est);
    }

    // held-out baseline: quality of the FBP inputs themselves
    if (!ds.val.empty()) {
        std::vector<Image> s_in, targets;
        for (const auto& b : ds.val) {
            s_in.push_back(b.s);
            targets.push_back(b.target);
        }
        const auto base = metrics::evaluate(s_in, targets);
        r.input_val_psnr = base.mean_psnr;
        r.input_val_ssim = base.mean_ssim;
    }

    auto validate = [&]() -> std::pair<double, double> {
        if (ds.val.empty()) return {0.0, 0.0};
        nn::NoGradGuard ng;
        std::vector<Image> recon(ds.val.size()), targets(ds.val.size());
        for (size_t i = 0; i < ds.val.size(); ++i) {
            const auto& b = ds.val[i];
            const SliceFlows flows = cache_flows
                                         ? val_flows.per_batch[i]
                                         : estimate_slice_flows(live_est, b.s, b.neighbors);
            recon[i] = reconstruct_graph(r.gen, b.s, b.neighbors, flows)->to_image();
            targets[i] = b.target;
        }
        const auto rep = metrics::evaluate(recon, targets);
        return {rep.mean_psnr, rep.mean_ssim};
    };

    auto save_state = [&](int epoch, const char* tag) {
        if (cfg.out_dir.empty()) return;
        const auto p = [&](const std::string& n) { return cfg.out_dir / (tag + ("_" + n)); };
        nn::save_checkpoint(p("gen.ckpt"), g_params, epoch);
        nn::save_checkpoint(p("disc.ckpt"), d_params, epoch);
        nn::save_adam_state(p("gen.opt"), g_opt);
        nn::save_adam_state(p("disc.opt"), d_opt);
        if (cfg.flow_mode == FlowMode::Learned) {
            nn::save_checkpoint(p("flow.ckpt"), f_params, epoch);
            nn::save_adam_state(p("flow.opt"), f_opt);
        }
    };

    if (!cfg.resume_from.empty()) {
        start_epoch = nn::load_checkpoint(cfg.resume_from / "last_gen.ckpt", g_params);
        nn::load_checkpoint(cfg.resume_from / "last_disc.ckpt", d_params);
        nn::load_adam_state(cfg.resume_from / "last_gen.opt", g_opt);
        nn::load_adam_state(cfg.resume_from / "last_disc.opt", d_opt);
        if (cfg.flow_mode == FlowMode::Learned) {
            nn::load_checkpoint(cfg.resume_from / "last_flow.ckpt", f_params);
            nn::load_adam_state(cfg.resume_from / "last_flow.opt", f_opt);
        }
    }

    const std::string csv_header =
        "# flow=" +
        std::string(ablation ? "none" : (cfg.flow_mode == FlowMode::Learned ? "learned"
                                                                            : "classic")) +
        " seed=" + std::to_string(cfg.seed) + "\n" + metrics_csv_header();

    Rng shuffle_rng(Rng::mix(cfg.seed, 0x5FFE));
    std::vector<size_t> order(ds.train.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = -1e300;
    std::vector<std::vector<double>> best_params;
    auto snapshot_best = [&](double val_psnr) {
        if (!cfg.select_best_val || val_psnr <= best_val) return;
        best_val = val_psnr;
        best_params.clear();
        for (const auto& p : g_params) best_params.push_back(p.tensor->data);
        for (const auto& p : d_params) best_params.push_back(p.tensor->data);
        for (const auto& p : f_params) best_params.push_back(p.tensor->data);
    };

    for (int epoch = start_epoch; epoch < start_epoch + cfg.epochs; ++epoch) {
        // deterministic Fisher-Yates reshuffle per epoch
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

        double ep_d = 0.0, ep_pix = 0.0, ep_adv = 0.0, ep_per = 0.0;
        int n_batches = 0;

        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t take = std::min<size_t>(cfg.batch_size, order.size() - pos);

            std::vector<TensorPtr> fakes, reals;
            for (size_t b = 0; b < take; ++b) {
                const size_t idx = order[pos + b];
                const auto& batch = ds.train[idx];
                const SliceFlows flows =
                    cache_flows ? train_flows.per_batch[idx]
                                : estimate_slice_flows(live_est, batch.s, batch.neighbors);
                fakes.push_back(reconstruct_graph(r.gen, batch.s, batch.neighbors, flows));
                reals.push_back(nn::Tensor::from_image(batch.target));
            }
            auto fake_batch = nn::concat_batch(fakes);
            auto real_batch = nn::concat_batch(reals);

            // discriminator step
            auto ld = d_loss_graph(r.disc, real_batch, nn::detach(fake_batch));
            d_opt.zero_grad(d_params);
            g_opt.zero_grad(g_params);
            nn::backward(ld);
            d_opt.step(d_params);

            // generator step against the updated discriminator
            auto lg = g_loss_graph(r.disc, fake_batch, real_batch, cfg.weights);
            d_opt.zero_grad(d_params);
            g_opt.zero_grad(g_params);
            nn::backward(lg.total);
            g_opt.step(g_params);

            // co-train the learned estimator on a photometric warp loss
            if (cfg.flow_mode == FlowMode::Learned && !ablation) {
                TensorPtr floss;
                for (size_t b = 0; b < take; ++b) {
                    const auto& batch = ds.train[order[pos + b]];
                    for (const Image& nb : batch.neighbors.slices) {
                        auto in = nn::Tensor::create({1, 2, size, size});
                        std::copy(nb.data.begin(), nb.data.end(), in->data.begin());
                        std::copy(batch.s.data.begin(), batch.s.data.end(),
                                  in->data.begin() + nb.size());
                        auto motion = r.flownet.forward(in);
                        auto warped = nn::warp_by_flow(nn::Tensor::from_image(nb),
                                                       nn::affine(motion, -1.0, 0.0));
                        auto term = nn::sum_all(nn::abs_elem(
                            nn::sub(warped, nn::Tensor::from_image(batch.s))));
                        floss = floss ? nn::add(floss, term) : term;
                    }
                }
                f_opt.zero_grad(f_params);
                nn::backward(floss);
                f_opt.step(f_params);
            }

            ep_d += ld->data[0];
            ep_pix += lg.pixel->data[0];
            ep_adv += lg.adv->data[0];
            ep_per += lg.percept->data[0];
            ++n_batches;
        }

        EpochLog log;
        log.epoch = epoch + 1;
        log.d_loss = ep_d / n_batches;
        log.pixel = ep_pix / n_batches;
        log.adv = ep_adv / n_batches;
        log.percept = ep_per / n_batches;
        std::tie(log.val_psnr, log.val_ssim) = validate();
        r.log.push_back(log);
        r.epochs_run = epoch + 1;
        snapshot_best(log.val_psnr);

        const bool checkpoint_now = (epoch + 1) % cfg.checkpoint_every == 0;
        if (!cfg.out_dir.empty()) {
            io::write_csv(cfg.out_dir / "metrics.csv", csv_header,
                          metrics_csv_rows(r.log));
            if (checkpoint_now) {
                char tag[32];
                std::snprintf(tag, sizeof tag, "epoch%03d", epoch + 1);
                save_state(epoch + 1, tag);
                save_state(epoch + 1, "last");
                nn::NoGradGuard ng;
                std::vector<Image> recon(ds.val.size());
                for (size_t i = 0; i < ds.val.size(); ++i) {
                    const auto& b = ds.val[i];
                    const SliceFlows flows =
                        cache_flows ? val_flows.per_batch[i]
                                    : estimate_slice_flows(live_est, b.s, b.neighbors);
                    recon[i] = reconstruct_graph(r.gen, b.s, b.neighbors, flows)->to_image();
                }
                write_montages(cfg.out_dir / ("montage_" + std::string(tag)), ds.val, recon);
            }
        }

        if (cfg.stop_psnr_gap > 0.0 && !ds.val.empty() &&
            log.val_psnr - r.input_val_psnr >= cfg.stop_psnr_gap &&
            log.val_ssim - r.input_val_ssim >= cfg.stop_ssim_gap)
            break;
    }

    if (!cfg.out_dir.empty()) {
        save_state(r.epochs_run, "last");
        io::write_csv(cfg.out_dir / "metrics.csv", csv_header, metrics_csv_rows(r.log));
    }
    if (cfg.select_best_val && !best_params.empty()) {
        size_t i = 0;
        for (auto& p : g_params) p.tensor->data = best_params[i++];
        for (auto& p : d_params) p.tensor->data = best_params[i++];
        for (auto& p : f_params) p.tensor->data = best_params[i++];
    }
    return r;
}

}  // namespace ctlc::gan
