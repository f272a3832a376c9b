#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "ctlc/dataset.hpp"
#include "ctlc/flow.hpp"
#include "ctlc/nn.hpp"
#include "ctlc/types.hpp"

namespace ctlc::gan {

/// Scores are clamped to [eps, 1-eps] before logs.
constexpr double kScoreEps = 1e-7;

struct LossWeights {
    double lambda_pix = 1.0;
    double lambda_adv = 0.01;
    // The perceptual term sums absolute tap differences, so its raw size
    // scales with tap element count; this default rebalances it against the
    // mean-form pixel loss at 64x64 tap sizes.
    double lambda_per = 1e-6;
};

enum class FlowMode { Classic, Learned };

struct TrainConfig {
    int epochs = 50;
    int batch_size = 2;
    uint64_t seed = 0;
    LossWeights weights;
    FlowMode flow_mode = FlowMode::Classic;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double hs_alpha = 0.1;
    int hs_iters = 200;
    int checkpoint_every = 10;
    std::filesystem::path out_dir;      // empty: keep everything in memory
    std::filesystem::path resume_from;  // directory holding last_* checkpoints
    // optional early stop once the held-out gains reach these gaps (0 = off)
    double stop_psnr_gap = 0.0;
    double stop_ssim_gap = 0.0;
    bool disable_warp = false;  // ablation: zero-flow neighbor fusion
    // return the epoch snapshot with the best held-out PSNR instead of the
    // last one (checkpoints on disk still track the actual last epoch)
    bool select_best_val = false;
};

/// Estimates the motion from a neighbor slice to the current one.
using FlowEstimator = std::function<FlowField(const Image& neighbor, const Image& current)>;

FlowEstimator make_classic_estimator(double alpha = 0.1, int iters = 200);
FlowEstimator make_zero_estimator();

// ---- generation recursion -------------------------------------------------

/// Pass each neighbor through the generator without coherence input: the
/// warped-neighbor channels are filled with the slice itself.
NeighborSet generate_neighbors(const nn::GeneratorNet& g, const NeighborSet& neighbors);

/// Full two-phase reconstruction of one slice: generate neighbors, estimate
/// flows on the low-dose pair, align the generated neighbors onto the current
/// slice, then run the generator on [s; warped predecessor; warped successor]
/// (a missing neighbor channel duplicates the present one).
Image reconstruct(const nn::GeneratorNet& g, const FlowEstimator& f_est, const Image& s,
                  const NeighborSet& neighbors);

/// Applies reconstruct to every slice of an ordered stack, with the boundary
/// neighbor rule; a single slice degrades to self-neighboring.
std::vector<Image> infer_volume(const nn::GeneratorNet& g, const FlowEstimator& f_est,
                                const std::vector<Image>& slices);

// ---- objectives -------------------------------------------------------------

/// Sum over the batch of -(log d(real) + log(1 - d(fake))), scores clamped.
double loss_discriminator(const nn::DiscriminatorNet& d, const std::vector<Image>& real,
                          const std::vector<Image>& fake);

struct GenLossValues {
    double total = 0.0;
    double pixel = 0.0;    // mean squared pixel error
    double adv = 0.0;      // sum of -log d(fake), non-saturating
    double percept = 0.0;  // L1 over discriminator feature taps
};

GenLossValues loss_generator(const nn::DiscriminatorNet& d, const std::vector<Image>& x_g,
                             const std::vector<Image>& x_r, const LossWeights& w);

double loss_perceptual(const nn::DiscriminatorNet& d, const std::vector<Image>& x_r,
                       const std::vector<Image>& x_g);

// graph-building forms used by the training loop
/// Separation objective on raw scores (clamped): sum_i -(log r_i + log(1-f_i)).
nn::TensorPtr d_loss_from_scores(const nn::TensorPtr& real_scores,
                                 const nn::TensorPtr& fake_scores);
nn::TensorPtr d_loss_graph(const nn::DiscriminatorNet& d, const nn::TensorPtr& real,
                           const nn::TensorPtr& fake_detached);
struct GenLossGraph {
    nn::TensorPtr total, pixel, adv, percept;
};
GenLossGraph g_loss_graph(const nn::DiscriminatorNet& d, const nn::TensorPtr& x_g,
                          const nn::TensorPtr& x_r, const LossWeights& w);
nn::TensorPtr perceptual_from_taps(const std::array<nn::TensorPtr, 3>& taps_r,
                                   const std::array<nn::TensorPtr, 3>& taps_g);

// ---- training ------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double d_loss = 0.0, pixel = 0.0, adv = 0.0, percept = 0.0;
    double val_psnr = 0.0, val_ssim = 0.0;
};

struct TrainResult {
    nn::GeneratorNet gen;
    nn::DiscriminatorNet disc;
    nn::FlowNetLite flownet;
    std::vector<EpochLog> log;
    double input_val_psnr = 0.0;  // FBP baseline on the held-out split
    double input_val_ssim = 0.0;
    int epochs_run = 0;
};

/// Alternating updates, one discriminator step then one generator step per
/// batch; the flow estimator is frozen in classic mode and co-trained on a
/// photometric warp loss in learned mode. Deterministic per cfg.seed.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// CSV rows matching the training log (epoch,d_loss,pixel,adv,percept,
/// val_psnr,val_ssim).
std::string metrics_csv_header();
std::vector<std::string> metrics_csv_rows(const std::vector<EpochLog>& log);

}  // namespace ctlc::gan
