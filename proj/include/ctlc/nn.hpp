#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctlc/types.hpp"

namespace ctlc::nn {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Shape-tagged array with an attached gradient buffer; nodes of the reverse-
/// mode graph. Non-leaf tensors carry a closure that pushes their gradient to
/// their parents.
class Tensor : public std::enable_shared_from_this<Tensor> {
  public:
    std::vector<int> shape;  // activations use {N, C, H, W}
    std::vector<double> data;
    std::vector<double> grad;  // lazily allocated
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void()> backprop;

    static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    static TensorPtr from_image(const Image& img);  // {1,1,H,W} leaf

    int64_t numel() const;
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    void ensure_grad();             // allocate and zero if absent
    void zero_grad();               // zero without deallocating
    void accumulate_grad(const std::vector<double>& g);
    Image to_image() const;         // {1,1,H,W} or {H,W} -> Image
};

/// Runs reverse-mode accumulation from a scalar loss; every reachable tensor
/// with requires_grad receives d loss / d tensor additively.
void backward(const TensorPtr& loss);

bool grad_enabled();
/// Disables graph construction in scope (plain forward evaluation).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// ---- differentiable operations -------------------------------------------

TensorPtr conv2d_forward(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                         int pad);
TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad);
TensorPtr leaky_relu(const TensorPtr& x, double negative_slope = 0.2);
TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr instance_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                        double eps = 1e-5);
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_batch(const std::vector<TensorPtr>& xs);
TensorPtr channel_slice(const TensorPtr& x, int from, int count);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr affine(const TensorPtr& x, double scale, double offset);
TensorPtr clamp(const TensorPtr& x, double lo, double hi);
TensorPtr log_elem(const TensorPtr& x);
TensorPtr abs_elem(const TensorPtr& x);
TensorPtr global_avg_pool(const TensorPtr& x);  // {N,C,H,W} -> {N,C,1,1}
TensorPtr sum_all(const TensorPtr& x);          // -> scalar {1}
TensorPtr mean_all(const TensorPtr& x);
TensorPtr detach(const TensorPtr& x);

/// Backward warp of a non-differentiated source by a differentiable flow:
/// out(p) = bilinear sample of src at p + flow(p) (clamped to the grid).
/// src: {N,1,H,W} (must not require grad), flow: {N,2,H,W} (u plane, v plane).
TensorPtr warp_by_flow(const TensorPtr& src, const TensorPtr& flow);

// ---- layers ----------------------------------------------------------------

/// Declarative layer description kept alongside the built networks.
struct LayerSpec {
    enum class Kind {
        Conv,
        ConvTranspose,
        LeakyRelu,
        Relu,
        Sigmoid,
        InstanceNorm,
        ConcatSkip,
        ResidualBlock
    };
    Kind kind = Kind::Conv;
    int kernel = 3;
    int stride = 1;
    int in_channels = 1;
    int out_channels = 1;
    double negative_slope = 0.2;
};

struct Param {
    std::string name;
    TensorPtr tensor;
};

struct Conv2d {
    TensorPtr w, b;
    int stride = 1, pad = 1;
    bool transpose = false;
    TensorPtr operator()(const TensorPtr& x) const;
};

struct InstanceNorm2d {
    TensorPtr gamma, beta;
    TensorPtr operator()(const TensorPtr& x) const;
};

// ---- the three networks ----------------------------------------------------

/// U-Net with stride-2 encoder convolutions, transposed-convolution decoder,
/// skip concatenations and a global residual head: the output adds the first
/// input channel (the current slice), so a zeroed final layer is the
/// identity on that channel.
struct GeneratorNet {
    int input_size = 0;
    // encoder
    Conv2d e0, e1, e2, e3;
    InstanceNorm2d n0, n1, n2, n3;
    // decoder
    Conv2d t2, c2, t1, c1, t0, c0, out;
    InstanceNorm2d tn2, cn2, tn1, cn1, tn0, cn0;
    std::vector<LayerSpec> layout;

    TensorPtr forward(const TensorPtr& x) const;  // {N,3,H,W} -> {N,1,H,W}
    std::vector<Param> params();
    /// Zeroes the final convolution: forward becomes the identity on the
    /// slice channel.
    void make_identity();
};

/// Three 4-convolution residual blocks with projection shortcuts, each
/// halving the spatial extent; block outputs are exposed as feature taps.
/// Global average pooling and a sigmoid head give a scalar in (0, 1).
struct DiscriminatorNet {
    int input_size = 0;
    struct Block {
        Conv2d c1, c2, c3, c4, skip;
        InstanceNorm2d m1, m2, m3, m4;
        bool use_norm = true;
    };
    std::array<Block, 3> blocks;
    Conv2d head;
    std::vector<LayerSpec> layout;

    struct Output {
        TensorPtr score;                  // {N,1,1,1}, in (0,1)
        std::array<TensorPtr, 3> taps;    // block outputs, coarse to fine
    };
    Output forward_taps(const TensorPtr& x) const;
    TensorPtr forward(const TensorPtr& x) const;
    std::vector<Param> params();
};

/// Six-convolution encoder, six-deconvolution decoder; input is the stacked
/// slice pair, output the two flow components.
struct FlowNetLite {
    int input_size = 0;
    std::array<Conv2d, 6> enc;
    std::array<InstanceNorm2d, 6> enc_norm;
    std::array<Conv2d, 6> dec;
    std::array<InstanceNorm2d, 5> dec_norm;  // final layer is linear
    std::vector<LayerSpec> layout;

    TensorPtr forward(const TensorPtr& x) const;  // {N,2,H,W} -> {N,2,H,W}
    std::vector<Param> params();
    void make_zero();  // zero final layer: estimator returns zero flow
};

GeneratorNet build_generator(int size, uint64_t seed = 1);
DiscriminatorNet build_discriminator(int size, uint64_t seed = 2);
FlowNetLite build_flownet(int size, uint64_t seed = 3);

// ---- optimizer --------------------------------------------------------------

struct AdamState {
    int64_t t = 0;
    std::vector<double> m, v;
};

/// One bias-corrected Adam update on a raw parameter/gradient pair.
void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps = 1e-8);

struct Adam {
    double lr = 2e-4, beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
    std::vector<AdamState> states;

    void step(std::vector<Param>& params);
    void zero_grad(std::vector<Param>& params);
};

// ---- checkpoints -------------------------------------------------------------

/// Parameter container: the CTLC header frames the concatenated f64 payload,
/// with a JSON manifest block (ordered names, shapes, epoch tag) between
/// header and payload.
void save_checkpoint(const std::filesystem::path& path, const std::vector<Param>& params,
                     int epoch);
/// Loads into existing parameters; shapes must match. Returns the stored epoch.
int load_checkpoint(const std::filesystem::path& path, std::vector<Param>& params);

void save_adam_state(const std::filesystem::path& path, const Adam& opt);
void load_adam_state(const std::filesystem::path& path, Adam& opt);

}  // namespace ctlc::nn
