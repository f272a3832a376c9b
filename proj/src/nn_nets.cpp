#include <cmath>

#include "ctlc/flow.hpp"
#include "ctlc/nn.hpp"
#include "ctlc/rng.hpp"

namespace ctlc::nn {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

void check_build_size(int size) {
    require(is_pow2(size) && size >= 32, "network size must be a power of two >= 32");
}

TensorPtr make_param(ctlc::Rng& rng, std::vector<int> shape, double stddev) {
    auto t = Tensor::create(std::move(shape), true);
    if (stddev > 0.0)
        for (double& v : t->data) v = rng.gaussian(0.0, stddev);
    return t;
}

Conv2d make_conv(ctlc::Rng& rng, int cin, int cout, int k, int stride, int pad) {
    Conv2d c;
    c.w = make_param(rng, {cout, cin, k, k}, 0.02);
    c.b = make_param(rng, {cout}, 0.0);
    c.stride = stride;
    c.pad = pad;
    c.transpose = false;
    return c;
}

Conv2d make_tconv(ctlc::Rng& rng, int cin, int cout, int k, int stride, int pad) {
    Conv2d c;
    c.w = make_param(rng, {cin, cout, k, k}, 0.02);
    c.b = make_param(rng, {cout}, 0.0);
    c.stride = stride;
    c.pad = pad;
    c.transpose = true;
    return c;
}

InstanceNorm2d make_norm(int channels) {
    InstanceNorm2d n;
    n.gamma = Tensor::create({channels}, true);
    std::fill(n.gamma->data.begin(), n.gamma->data.end(), 1.0);
    n.beta = Tensor::create({channels}, true);
    return n;
}

void push_params(std::vector<Param>& out, const std::string& prefix, const Conv2d& c) {
    out.push_back({prefix + ".w", c.w});
    out.push_back({prefix + ".b", c.b});
}

void push_params(std::vector<Param>& out, const std::string& prefix, const InstanceNorm2d& n) {
    out.push_back({prefix + ".gamma", n.gamma});
    out.push_back({prefix + ".beta", n.beta});
}

}  // namespace

TensorPtr Conv2d::operator()(const TensorPtr& x) const {
    return transpose ? conv_transpose2d(x, w, b, stride, pad) : conv2d_forward(x, w, b, stride, pad);
}

TensorPtr InstanceNorm2d::operator()(const TensorPtr& x) const {
    return instance_norm(x, gamma, beta);
}

// ---- generator -----------------------------------------------------------------

GeneratorNet build_generator(int size, uint64_t seed) {
    check_build_size(size);
    ctlc::Rng rng(ctlc::Rng::mix(seed, 0x6E47));
    GeneratorNet g;
    g.input_size = size;
    g.e0 = make_conv(rng, 3, 32, 3, 1, 1);
    g.n0 = make_norm(32);
    g.e1 = make_conv(rng, 32, 64, 3, 2, 1);
    g.n1 = make_norm(64);
    g.e2 = make_conv(rng, 64, 128, 3, 2, 1);
    g.n2 = make_norm(128);
    g.e3 = make_conv(rng, 128, 256, 3, 2, 1);
    g.n3 = make_norm(256);
    g.t2 = make_tconv(rng, 256, 128, 4, 2, 1);
    g.tn2 = make_norm(128);
    g.c2 = make_conv(rng, 256, 128, 3, 1, 1);
    g.cn2 = make_norm(128);
    g.t1 = make_tconv(rng, 128, 64, 4, 2, 1);
    g.tn1 = make_norm(64);
    g.c1 = make_conv(rng, 128, 64, 3, 1, 1);
    g.cn1 = make_norm(64);
    g.t0 = make_tconv(rng, 64, 32, 4, 2, 1);
    g.tn0 = make_norm(32);
    g.c0 = make_conv(rng, 64, 32, 3, 1, 1);
    g.cn0 = make_norm(32);
    g.out = make_conv(rng, 32, 1, 3, 1, 1);

    using K = LayerSpec::Kind;
    g.layout = {{K::Conv, 3, 1, 3, 32, 0.2},          {K::InstanceNorm, 0, 0, 32, 32, 0},
                {K::LeakyRelu, 0, 0, 32, 32, 0.2},    {K::Conv, 3, 2, 32, 64, 0.2},
                {K::InstanceNorm, 0, 0, 64, 64, 0},   {K::LeakyRelu, 0, 0, 64, 64, 0.2},
                {K::Conv, 3, 2, 64, 128, 0.2},        {K::InstanceNorm, 0, 0, 128, 128, 0},
                {K::LeakyRelu, 0, 0, 128, 128, 0.2},  {K::Conv, 3, 2, 128, 256, 0.2},
                {K::InstanceNorm, 0, 0, 256, 256, 0}, {K::LeakyRelu, 0, 0, 256, 256, 0.2},
                {K::ConvTranspose, 4, 2, 256, 128, 0}, {K::ConcatSkip, 0, 0, 128, 256, 0},
                {K::Conv, 3, 1, 256, 128, 0},         {K::ConvTranspose, 4, 2, 128, 64, 0},
                {K::ConcatSkip, 0, 0, 64, 128, 0},    {K::Conv, 3, 1, 128, 64, 0},
                {K::ConvTranspose, 4, 2, 64, 32, 0},  {K::ConcatSkip, 0, 0, 32, 64, 0},
                {K::Conv, 3, 1, 64, 32, 0},           {K::Conv, 3, 1, 32, 1, 0}};
    return g;
}

TensorPtr GeneratorNet::forward(const TensorPtr& x) const {
    require(x->shape.size() == 4 && x->dim(1) == 3, "generator expects a {N,3,H,W} input");
    require(x->dim(2) % 8 == 0 && x->dim(3) % 8 == 0,
            "generator input extent must be a multiple of 8");
    auto a0 = leaky_relu(n0(e0(x)));
    auto a1 = leaky_relu(n1(e1(a0)));
    auto a2 = leaky_relu(n2(e2(a1)));
    auto a3 = leaky_relu(n3(e3(a2)));
    auto d2 = relu(tn2(t2(a3)));
    d2 = relu(cn2(c2(concat_channels(d2, a2))));
    auto d1 = relu(tn1(t1(d2)));
    d1 = relu(cn1(c1(concat_channels(d1, a1))));
    auto d0 = relu(tn0(t0(d1)));
    d0 = relu(cn0(c0(concat_channels(d0, a0))));
    auto res = out(d0);
    // global residual on the slice channel
    return add(channel_slice(x, 0, 1), res);
}

std::vector<Param> GeneratorNet::params() {
    std::vector<Param> p;
    push_params(p, "g.e0", e0);
    push_params(p, "g.n0", n0);
    push_params(p, "g.e1", e1);
    push_params(p, "g.n1", n1);
    push_params(p, "g.e2", e2);
    push_params(p, "g.n2", n2);
    push_params(p, "g.e3", e3);
    push_params(p, "g.n3", n3);
    push_params(p, "g.t2", t2);
    push_params(p, "g.tn2", tn2);
    push_params(p, "g.c2", c2);
    push_params(p, "g.cn2", cn2);
    push_params(p, "g.t1", t1);
    push_params(p, "g.tn1", tn1);
    push_params(p, "g.c1", c1);
    push_params(p, "g.cn1", cn1);
    push_params(p, "g.t0", t0);
    push_params(p, "g.tn0", tn0);
    push_params(p, "g.c0", c0);
    push_params(p, "g.cn0", cn0);
    push_params(p, "g.out", out);
    return p;
}

void GeneratorNet::make_identity() {
    std::fill(out.w->data.begin(), out.w->data.end(), 0.0);
    std::fill(out.b->data.begin(), out.b->data.end(), 0.0);
}

// ---- discriminator ----------------------------------------------------------------

namespace {

DiscriminatorNet::Block make_block(ctlc::Rng& rng, int cin, int cout, bool use_norm) {
    DiscriminatorNet::Block b;
    b.c1 = make_conv(rng, cin, cout, 3, 2, 1);
    b.c2 = make_conv(rng, cout, cout, 3, 1, 1);
    b.c3 = make_conv(rng, cout, cout, 3, 1, 1);
    b.c4 = make_conv(rng, cout, cout, 3, 1, 1);
    b.skip = make_conv(rng, cin, cout, 1, 2, 0);
    b.m1 = make_norm(cout);
    b.m2 = make_norm(cout);
    b.m3 = make_norm(cout);
    b.m4 = make_norm(cout);
    b.use_norm = use_norm;
    return b;
}

TensorPtr run_block(const DiscriminatorNet::Block& b, const TensorPtr& x) {
    auto h = b.c1(x);
    if (b.use_norm) h = b.m1(h);
    h = leaky_relu(h);
    h = b.c2(h);
    if (b.use_norm) h = b.m2(h);
    h = leaky_relu(h);
    h = b.c3(h);
    if (b.use_norm) h = b.m3(h);
    h = leaky_relu(h);
    h = b.c4(h);
    if (b.use_norm) h = b.m4(h);
    return leaky_relu(add(h, b.skip(x)));
}

}  // namespace

DiscriminatorNet build_discriminator(int size, uint64_t seed) {
    check_build_size(size);
    ctlc::Rng rng(ctlc::Rng::mix(seed, 0xD15C));
    DiscriminatorNet d;
    d.input_size = size;
    d.blocks[0] = make_block(rng, 1, 32, true);
    d.blocks[1] = make_block(rng, 32, 64, true);
    d.blocks[2] = make_block(rng, 64, 128, false);  // final block runs without norm
    d.head = make_conv(rng, 128, 1, 1, 1, 0);

    using K = LayerSpec::Kind;
    d.layout = {{K::ResidualBlock, 3, 2, 1, 32, 0.2},
                {K::ResidualBlock, 3, 2, 32, 64, 0.2},
                {K::ResidualBlock, 3, 2, 64, 128, 0.2},
                {K::Conv, 1, 1, 128, 1, 0},
                {K::Sigmoid, 0, 0, 1, 1, 0}};
    return d;
}

DiscriminatorNet::Output DiscriminatorNet::forward_taps(const TensorPtr& x) const {
    require(x->shape.size() == 4 && x->dim(1) == 1, "discriminator expects a {N,1,H,W} input");
    require(x->dim(2) % 8 == 0 && x->dim(3) % 8 == 0,
            "discriminator input extent must be a multiple of 8");
    Output o;
    auto h = run_block(blocks[0], x);
    o.taps[0] = h;
    h = run_block(blocks[1], h);
    o.taps[1] = h;
    h = run_block(blocks[2], h);
    o.taps[2] = h;
    o.score = sigmoid(head(global_avg_pool(h)));
    return o;
}

TensorPtr DiscriminatorNet::forward(const TensorPtr& x) const { return forward_taps(x).score; }

std::vector<Param> DiscriminatorNet::params() {
    std::vector<Param> p;
    for (int i = 0; i < 3; ++i) {
        const std::string pre = "d.b" + std::to_string(i);
        push_params(p, pre + ".c1", blocks[i].c1);
        push_params(p, pre + ".c2", blocks[i].c2);
        push_params(p, pre + ".c3", blocks[i].c3);
        push_params(p, pre + ".c4", blocks[i].c4);
        push_params(p, pre + ".skip", blocks[i].skip);
        if (blocks[i].use_norm) {
            push_params(p, pre + ".m1", blocks[i].m1);
            push_params(p, pre + ".m2", blocks[i].m2);
            push_params(p, pre + ".m3", blocks[i].m3);
            push_params(p, pre + ".m4", blocks[i].m4);
        }
    }
    push_params(p, "d.head", head);
    return p;
}

// ---- flow net ----------------------------------------------------------------------

FlowNetLite build_flownet(int size, uint64_t seed) {
    check_build_size(size);
    ctlc::Rng rng(ctlc::Rng::mix(seed, 0xF10E));
    FlowNetLite f;
    f.input_size = size;
    f.enc[0] = make_conv(rng, 2, 16, 3, 1, 1);
    f.enc_norm[0] = make_norm(16);
    f.enc[1] = make_conv(rng, 16, 32, 3, 2, 1);
    f.enc_norm[1] = make_norm(32);
    f.enc[2] = make_conv(rng, 32, 32, 3, 1, 1);
    f.enc_norm[2] = make_norm(32);
    f.enc[3] = make_conv(rng, 32, 64, 3, 2, 1);
    f.enc_norm[3] = make_norm(64);
    f.enc[4] = make_conv(rng, 64, 64, 3, 1, 1);
    f.enc_norm[4] = make_norm(64);
    f.enc[5] = make_conv(rng, 64, 64, 3, 2, 1);
    f.enc_norm[5] = make_norm(64);
    f.dec[0] = make_tconv(rng, 64, 64, 4, 2, 1);
    f.dec_norm[0] = make_norm(64);
    f.dec[1] = make_tconv(rng, 64, 32, 3, 1, 1);
    f.dec_norm[1] = make_norm(32);
    f.dec[2] = make_tconv(rng, 32, 32, 4, 2, 1);
    f.dec_norm[2] = make_norm(32);
    f.dec[3] = make_tconv(rng, 32, 16, 3, 1, 1);
    f.dec_norm[3] = make_norm(16);
    f.dec[4] = make_tconv(rng, 16, 16, 4, 2, 1);
    f.dec_norm[4] = make_norm(16);
    f.dec[5] = make_tconv(rng, 16, 2, 3, 1, 1);  // linear head: flow is signed

    using K = LayerSpec::Kind;
    f.layout = {{K::Conv, 3, 1, 2, 16, 0.2},          {K::Conv, 3, 2, 16, 32, 0.2},
                {K::Conv, 3, 1, 32, 32, 0.2},         {K::Conv, 3, 2, 32, 64, 0.2},
                {K::Conv, 3, 1, 64, 64, 0.2},         {K::Conv, 3, 2, 64, 64, 0.2},
                {K::ConvTranspose, 4, 2, 64, 64, 0},  {K::ConvTranspose, 3, 1, 64, 32, 0},
                {K::ConvTranspose, 4, 2, 32, 32, 0},  {K::ConvTranspose, 3, 1, 32, 16, 0},
                {K::ConvTranspose, 4, 2, 16, 16, 0},  {K::ConvTranspose, 3, 1, 16, 2, 0}};
    return f;
}

TensorPtr FlowNetLite::forward(const TensorPtr& x) const {
    require(x->shape.size() == 4 && x->dim(1) == 2, "flow net expects a {N,2,H,W} input");
    require(x->dim(2) % 8 == 0 && x->dim(3) % 8 == 0,
            "flow net input extent must be a multiple of 8");
    auto h = x;
    for (int i = 0; i < 6; ++i) h = leaky_relu(enc_norm[i](enc[i](h)));
    for (int i = 0; i < 5; ++i) h = relu(dec_norm[i](dec[i](h)));
    return dec[5](h);
}

std::vector<Param> FlowNetLite::params() {
    std::vector<Param> p;
    for (int i = 0; i < 6; ++i) {
        push_params(p, "f.enc" + std::to_string(i), enc[i]);
        push_params(p, "f.enc_norm" + std::to_string(i), enc_norm[i]);
    }
    for (int i = 0; i < 6; ++i) {
        push_params(p, "f.dec" + std::to_string(i), dec[i]);
        if (i < 5) push_params(p, "f.dec_norm" + std::to_string(i), dec_norm[i]);
    }
    return p;
}

void FlowNetLite::make_zero() {
    std::fill(dec[5].w->data.begin(), dec[5].w->data.end(), 0.0);
    std::fill(dec[5].b->data.begin(), dec[5].b->data.end(), 0.0);
}

}  // namespace ctlc::nn

namespace ctlc::flow {

FlowField estimate_flow_learned(const Image& a, const Image& b, const nn::FlowNetLite& net) {
    require(a.same_shape(b), "estimate_flow_learned: dimension mismatch");
    require(a.height % 8 == 0 && a.width % 8 == 0,
            "estimate_flow_learned: image extent must be a multiple of 8");
    nn::NoGradGuard ng;
    auto in = nn::Tensor::create({1, 2, a.height, a.width});
    std::copy(a.data.begin(), a.data.end(), in->data.begin());
    std::copy(b.data.begin(), b.data.end(), in->data.begin() + a.size());
    auto out = net.forward(in);
    FlowField f(a.height, a.width);
    std::copy(out->data.begin(), out->data.begin() + f.size(), f.u.begin());
    std::copy(out->data.begin() + f.size(), out->data.end(), f.v.begin());
    return f;
}

}  // namespace ctlc::flow
