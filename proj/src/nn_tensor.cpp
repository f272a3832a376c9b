#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ctlc/kernels.hpp"
#include "ctlc/nn.hpp"

namespace ctlc::nn {

namespace {

thread_local bool g_grad_enabled = true;

void finite_check(const Tensor& t, const char* op) {
    for (double x : t.data)
        if (!std::isfinite(x)) throw numeric_error(std::string("non-finite value after ") + op);
}

bool want_graph(std::initializer_list<const TensorPtr*> parents) {
    if (!g_grad_enabled) return false;
    for (const TensorPtr* p : parents)
        if (*p && (*p)->requires_grad) return true;
    return false;
}

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void expect_nchw(const TensorPtr& x, const char* op) {
    require(x->shape.size() == 4, std::string(op) + ": expected a {N,C,H,W} tensor");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
    for (int d : shape) require(d >= 1, "Tensor::create: non-positive extent");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<size_t>(shape_numel(t->shape)), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    auto t = create({1}, requires_grad);
    t->data[0] = value;
    return t;
}

TensorPtr Tensor::from_image(const Image& img) {
    auto t = create({1, 1, img.height, img.width});
    t->data = img.data;
    return t;
}

int64_t Tensor::numel() const { return shape_numel(shape); }

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    ensure_grad();
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Image Tensor::to_image() const {
    require(shape.size() >= 2, "to_image: need at least 2 dims");
    const int h = shape[shape.size() - 2];
    const int w = shape[shape.size() - 1];
    require(numel() == static_cast<int64_t>(h) * w, "to_image: tensor is not a single plane");
    Image img(h, w);
    img.data = data;
    return img;
}

void backward(const TensorPtr& loss) {
    require(loss != nullptr, "backward: null loss");
    require(loss->numel() == 1, "backward: loss must be scalar");
    require(loss->requires_grad, "backward: loss does not require grad");

    // iterative post-order DFS over parents
    std::vector<Tensor*> topo;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<TensorPtr, size_t>> stack;
    stack.emplace_back(loss, 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorPtr child = node->parents[next_child++];
            if (child && seen.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            topo.push_back(node.get());
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Tensor* t = *it;
        if (!t->backprop) continue;
        t->ensure_grad();
        t->backprop();
    }
    for (Tensor* t : topo) {
        if (t->requires_grad && !t->grad.empty())
            for (double g : t->grad)
                if (!std::isfinite(g)) throw numeric_error("non-finite gradient in backward");
    }
}

// ---- convolution -------------------------------------------------------------

TensorPtr conv2d_forward(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                         int pad) {
    expect_nchw(x, "conv2d_forward");
    require(w->shape.size() == 4, "conv2d_forward: weights must be {Co,Ci,K,K}");
    require(stride >= 1, "conv2d_forward: stride must be positive");
    require(pad >= 0, "conv2d_forward: negative padding");
    const int n = x->dim(0), ci = x->dim(1), h = x->dim(2), win = x->dim(3);
    const int co = w->dim(0), k = w->dim(2);
    require(w->dim(1) == ci, "conv2d_forward: channel mismatch");
    require(w->dim(3) == k, "conv2d_forward: non-square kernel");
    require(!b || (b->numel() == co), "conv2d_forward: bias size mismatch");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (win + 2 * pad - k) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d_forward: output would be empty");

    auto out = Tensor::create({n, co, oh, ow});
    kernels::conv2d_fwd(x->data.data(), n, ci, h, win, w->data.data(), co, k, stride, pad,
                        b ? b->data.data() : nullptr, out->data.data());
    finite_check(*out, "conv2d_forward");

    if (want_graph({&x, &w, &b})) {
        out->requires_grad = true;
        out->parents = {x, w, b};
        Tensor* o = out.get();
        out->backprop = [o, x, w, b, n, ci, h, win, co, k, stride, pad, oh, ow]() {
            if (x->requires_grad) {
                std::vector<double> gin(x->data.size());
                kernels::conv2d_bwd_input(o->grad.data(), n, co, oh, ow, w->data.data(), ci, k,
                                          stride, pad, h, win, gin.data());
                x->accumulate_grad(gin);
            }
            if (w->requires_grad || (b && b->requires_grad)) {
                w->ensure_grad();
                if (b) b->ensure_grad();
                kernels::conv2d_bwd_weights(o->grad.data(), n, co, oh, ow, x->data.data(), ci, h,
                                            win, k, stride, pad, w->grad.data(),
                                            b ? b->grad.data() : nullptr);
            }
        };
    }
    return out;
}

TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                           int pad) {
    expect_nchw(x, "conv_transpose2d");
    require(w->shape.size() == 4, "conv_transpose2d: weights must be {Ci,Co,K,K}");
    require(stride >= 1, "conv_transpose2d: stride must be positive");
    const int n = x->dim(0), ci = x->dim(1), h = x->dim(2), win = x->dim(3);
    require(w->dim(0) == ci, "conv_transpose2d: channel mismatch");
    const int co = w->dim(1), k = w->dim(2);
    require(!b || (b->numel() == co), "conv_transpose2d: bias size mismatch");
    const int oh = (h - 1) * stride + k - 2 * pad;
    const int ow = (win - 1) * stride + k - 2 * pad;
    require(oh >= 1 && ow >= 1, "conv_transpose2d: output would be empty");

    auto out = Tensor::create({n, co, oh, ow});
    // the transposed operator is the conv input-gradient with x as the
    // upstream signal; weight layout {Ci,Co,K,K} lines up directly
    kernels::conv2d_bwd_input(x->data.data(), n, ci, h, win, w->data.data(), co, k, stride, pad,
                              oh, ow, out->data.data());
    if (b) {
        const size_t plane = static_cast<size_t>(oh) * ow;
        for (int bn = 0; bn < n; ++bn)
            for (int c = 0; c < co; ++c) {
                double* p = out->data.data() + (static_cast<size_t>(bn) * co + c) * plane;
                const double bv = b->data[c];
                for (size_t i = 0; i < plane; ++i) p[i] += bv;
            }
    }
    finite_check(*out, "conv_transpose2d");

    if (want_graph({&x, &w, &b})) {
        out->requires_grad = true;
        out->parents = {x, w, b};
        Tensor* o = out.get();
        out->backprop = [o, x, w, b, n, ci, h, win, co, k, stride, pad, oh, ow]() {
            if (x->requires_grad) {
                std::vector<double> gin(x->data.size());
                kernels::conv2d_fwd(o->grad.data(), n, co, oh, ow, w->data.data(), ci, k, stride,
                                    pad, nullptr, gin.data());
                x->accumulate_grad(gin);
            }
            if (w->requires_grad) {
                w->ensure_grad();
                kernels::conv2d_bwd_weights(x->data.data(), n, ci, h, win, o->grad.data(), co, oh,
                                            ow, k, stride, pad, w->grad.data(), nullptr);
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                const size_t plane = static_cast<size_t>(oh) * ow;
                for (int bn = 0; bn < n; ++bn)
                    for (int c = 0; c < co; ++c) {
                        const double* p =
                            o->grad.data() + (static_cast<size_t>(bn) * co + c) * plane;
                        double acc = 0.0;
                        for (size_t i = 0; i < plane; ++i) acc += p[i];
                        b->grad[c] += acc;
                    }
            }
        };
    }
    return out;
}

// ---- pointwise ops -----------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
TensorPtr pointwise(const TensorPtr& x, const char* name, Fwd fwd, Bwd dfdx) {
    auto out = Tensor::create(x->shape);
    for (size_t i = 0; i < x->data.size(); ++i) out->data[i] = fwd(x->data[i]);
    finite_check(*out, name);
    if (want_graph({&x})) {
        out->requires_grad = true;
        out->parents = {x};
        Tensor* o = out.get();
        out->backprop = [o, x, dfdx]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->data.size(); ++i)
                x->grad[i] += o->grad[i] * dfdx(x->data[i], o->data[i]);
        };
    }
    return out;
}

}  // namespace

TensorPtr leaky_relu(const TensorPtr& x, double negative_slope) {
    return pointwise(
        x, "leaky_relu", [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
        [negative_slope](double v, double) { return v > 0.0 ? 1.0 : negative_slope; });
}

TensorPtr relu(const TensorPtr& x) {
    return pointwise(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

TensorPtr sigmoid(const TensorPtr& x) {
    return pointwise(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorPtr clamp(const TensorPtr& x, double lo, double hi) {
    return pointwise(
        x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

TensorPtr log_elem(const TensorPtr& x) {
    return pointwise(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

TensorPtr abs_elem(const TensorPtr& x) {
    return pointwise(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

TensorPtr affine(const TensorPtr& x, double scale, double offset) {
    return pointwise(
        x, "affine", [scale, offset](double v) { return scale * v + offset; },
        [scale](double, double) { return scale; });
}

// ---- binary elementwise --------------------------------------------------------

namespace {

TensorPtr binary_op(const TensorPtr& a, const TensorPtr& b, const char* name,
                    double (*fwd)(double, double), void (*bwd)(Tensor*, const TensorPtr&,
                                                               const TensorPtr&)) {
    require(a->shape == b->shape, std::string(name) + ": shape mismatch");
    auto out = Tensor::create(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = fwd(a->data[i], b->data[i]);
    finite_check(*out, name);
    if (want_graph({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backprop = [o, a, b, bwd]() { bwd(o, a, b); };
    }
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](Tensor* o, const TensorPtr& a, const TensorPtr& b) {
            if (a->requires_grad) a->accumulate_grad(o->grad);
            if (b->requires_grad) b->accumulate_grad(o->grad);
        });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](Tensor* o, const TensorPtr& a, const TensorPtr& b) {
            if (a->requires_grad) a->accumulate_grad(o->grad);
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= o->grad[i];
            }
        });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](Tensor* o, const TensorPtr& a, const TensorPtr& b) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
            }
        });
}

// ---- structure ops ---------------------------------------------------------------

TensorPtr instance_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                        double eps) {
    expect_nchw(x, "instance_norm");
    const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
    require(gamma->numel() == c && beta->numel() == c, "instance_norm: affine size mismatch");
    const size_t plane = static_cast<size_t>(h) * w;

    auto out = Tensor::create(x->shape);
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * c);
#pragma omp parallel for collapse(2) schedule(static)
    for (int bn = 0; bn < n; ++bn) {
        for (int ch = 0; ch < c; ++ch) {
            const size_t off = (static_cast<size_t>(bn) * c + ch) * plane;
            const double* src = x->data.data() + off;
            double mean = 0.0;
            for (size_t i = 0; i < plane; ++i) mean += src[i];
            mean /= static_cast<double>(plane);
            double var = 0.0;
            for (size_t i = 0; i < plane; ++i) {
                const double d = src[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane);
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[static_cast<size_t>(bn) * c + ch] = is;
            const double g = gamma->data[ch], b = beta->data[ch];
            double* xh = xhat->data() + off;
            double* dst = out->data.data() + off;
            for (size_t i = 0; i < plane; ++i) {
                xh[i] = (src[i] - mean) * is;
                dst[i] = g * xh[i] + b;
            }
        }
    }
    finite_check(*out, "instance_norm");

    if (want_graph({&x, &gamma, &beta})) {
        out->requires_grad = true;
        out->parents = {x, gamma, beta};
        Tensor* o = out.get();
        out->backprop = [o, x, gamma, beta, xhat, inv_std, n, c, plane]() {
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            if (x->requires_grad) x->ensure_grad();
            for (int bn = 0; bn < n; ++bn) {
                for (int ch = 0; ch < c; ++ch) {
                    const size_t off = (static_cast<size_t>(bn) * c + ch) * plane;
                    const double* go = o->grad.data() + off;
                    const double* xh = xhat->data() + off;
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (size_t i = 0; i < plane; ++i) {
                        sum_g += go[i];
                        sum_gx += go[i] * xh[i];
                    }
                    if (beta->requires_grad) beta->grad[ch] += sum_g;
                    if (gamma->requires_grad) gamma->grad[ch] += sum_gx;
                    if (x->requires_grad) {
                        const double g = gamma->data[ch];
                        const double is = (*inv_std)[static_cast<size_t>(bn) * c + ch];
                        const double inv_m = 1.0 / static_cast<double>(plane);
                        double* gx = x->grad.data() + off;
                        for (size_t i = 0; i < plane; ++i)
                            gx[i] += g * is * (go[i] - inv_m * sum_g - xh[i] * inv_m * sum_gx);
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    expect_nchw(a, "concat_channels");
    expect_nchw(b, "concat_channels");
    require(a->dim(0) == b->dim(0) && a->dim(2) == b->dim(2) && a->dim(3) == b->dim(3),
            "concat_channels: incompatible shapes");
    const int n = a->dim(0), ca = a->dim(1), cb = b->dim(1), h = a->dim(2), w = a->dim(3);
    const size_t plane = static_cast<size_t>(h) * w;
    auto out = Tensor::create({n, ca + cb, h, w});
    for (int bn = 0; bn < n; ++bn) {
        std::copy(a->data.begin() + static_cast<int64_t>(bn) * ca * plane,
                  a->data.begin() + static_cast<int64_t>(bn + 1) * ca * plane,
                  out->data.begin() + static_cast<int64_t>(bn) * (ca + cb) * plane);
        std::copy(b->data.begin() + static_cast<int64_t>(bn) * cb * plane,
                  b->data.begin() + static_cast<int64_t>(bn + 1) * cb * plane,
                  out->data.begin() + (static_cast<int64_t>(bn) * (ca + cb) + ca) * plane);
    }
    if (want_graph({&a, &b})) {
        out->requires_grad = true;
        out->parents = {a, b};
        Tensor* o = out.get();
        out->backprop = [o, a, b, n, ca, cb, plane]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int bn = 0; bn < n; ++bn)
                    for (size_t i = 0; i < static_cast<size_t>(ca) * plane; ++i)
                        a->grad[static_cast<size_t>(bn) * ca * plane + i] +=
                            o->grad[static_cast<size_t>(bn) * (ca + cb) * plane + i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int bn = 0; bn < n; ++bn)
                    for (size_t i = 0; i < static_cast<size_t>(cb) * plane; ++i)
                        b->grad[static_cast<size_t>(bn) * cb * plane + i] +=
                            o->grad[(static_cast<size_t>(bn) * (ca + cb) + ca) * plane + i];
            }
        };
    }
    return out;
}

TensorPtr concat_batch(const std::vector<TensorPtr>& xs) {
    require(!xs.empty(), "concat_batch: empty list");
    for (const auto& x : xs) expect_nchw(x, "concat_batch");
    const int c = xs[0]->dim(1), h = xs[0]->dim(2), w = xs[0]->dim(3);
    int n_total = 0;
    for (const auto& x : xs) {
        require(x->dim(1) == c && x->dim(2) == h && x->dim(3) == w,
                "concat_batch: incompatible shapes");
        n_total += x->dim(0);
    }
    auto out = Tensor::create({n_total, c, h, w});
    size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->data.begin(), x->data.end(), out->data.begin() + off);
        off += x->data.size();
    }
    bool need = false;
    if (g_grad_enabled)
        for (const auto& x : xs) need = need || x->requires_grad;
    if (need) {
        out->requires_grad = true;
        out->parents = xs;
        Tensor* o = out.get();
        auto parts = xs;
        out->backprop = [o, parts]() {
            size_t off = 0;
            for (const auto& x : parts) {
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += o->grad[off + i];
                }
                off += x->data.size();
            }
        };
    }
    return out;
}

TensorPtr channel_slice(const TensorPtr& x, int from, int count) {
    expect_nchw(x, "channel_slice");
    const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
    require(from >= 0 && count >= 1 && from + count <= c, "channel_slice: range out of bounds");
    const size_t plane = static_cast<size_t>(h) * w;
    auto out = Tensor::create({n, count, h, w});
    for (int bn = 0; bn < n; ++bn)
        std::copy(x->data.begin() + (static_cast<int64_t>(bn) * c + from) * plane,
                  x->data.begin() + (static_cast<int64_t>(bn) * c + from + count) * plane,
                  out->data.begin() + static_cast<int64_t>(bn) * count * plane);
    if (want_graph({&x})) {
        out->requires_grad = true;
        out->parents = {x};
        Tensor* o = out.get();
        out->backprop = [o, x, n, c, from, count, plane]() {
            x->ensure_grad();
            for (int bn = 0; bn < n; ++bn)
                for (size_t i = 0; i < static_cast<size_t>(count) * plane; ++i)
                    x->grad[(static_cast<size_t>(bn) * c + from) * plane + i] +=
                        o->grad[static_cast<size_t>(bn) * count * plane + i];
        };
    }
    return out;
}

TensorPtr global_avg_pool(const TensorPtr& x) {
    expect_nchw(x, "global_avg_pool");
    const int n = x->dim(0), c = x->dim(1);
    const size_t plane = static_cast<size_t>(x->dim(2)) * x->dim(3);
    auto out = Tensor::create({n, c, 1, 1});
    for (int i = 0; i < n * c; ++i) {
        const double* src = x->data.data() + static_cast<size_t>(i) * plane;
        double acc = 0.0;
        for (size_t j = 0; j < plane; ++j) acc += src[j];
        out->data[i] = acc / static_cast<double>(plane);
    }
    if (want_graph({&x})) {
        out->requires_grad = true;
        out->parents = {x};
        Tensor* o = out.get();
        out->backprop = [o, x, n, c, plane]() {
            x->ensure_grad();
            for (int i = 0; i < n * c; ++i) {
                const double g = o->grad[i] / static_cast<double>(plane);
                double* dst = x->grad.data() + static_cast<size_t>(i) * plane;
                for (size_t j = 0; j < plane; ++j) dst[j] += g;
            }
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = Tensor::create({1});
    double acc = 0.0;
    for (double v : x->data) acc += v;
    out->data[0] = acc;
    finite_check(*out, "sum_all");
    if (want_graph({&x})) {
        out->requires_grad = true;
        out->parents = {x};
        Tensor* o = out.get();
        out->backprop = [o, x]() {
            x->ensure_grad();
            const double g = o->grad[0];
            for (double& gx : x->grad) gx += g;
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& x) {
    auto s = sum_all(x);
    return affine(s, 1.0 / static_cast<double>(x->numel()), 0.0);
}

TensorPtr detach(const TensorPtr& x) {
    auto out = Tensor::create(x->shape);
    out->data = x->data;
    return out;
}

TensorPtr warp_by_flow(const TensorPtr& src, const TensorPtr& flow) {
    expect_nchw(src, "warp_by_flow");
    expect_nchw(flow, "warp_by_flow");
    require(!src->requires_grad, "warp_by_flow: source must not require grad");
    require(src->dim(1) == 1 && flow->dim(1) == 2, "warp_by_flow: expected 1 + 2 channels");
    const int n = src->dim(0), h = src->dim(2), w = src->dim(3);
    require(flow->dim(0) == n && flow->dim(2) == h && flow->dim(3) == w,
            "warp_by_flow: shape mismatch");
    const size_t plane = static_cast<size_t>(h) * w;

    auto out = Tensor::create(src->shape);
    for (int bn = 0; bn < n; ++bn) {
        const double* img = src->data.data() + static_cast<size_t>(bn) * plane;
        const double* u = flow->data.data() + static_cast<size_t>(bn) * 2 * plane;
        const double* v = u + plane;
        double* dst = out->data.data() + static_cast<size_t>(bn) * plane;
        kernels::warp_bilinear(img, h, w, u, v, dst);
    }
    finite_check(*out, "warp_by_flow");

    if (want_graph({&flow})) {
        out->requires_grad = true;
        out->parents = {src, flow};
        Tensor* o = out.get();
        out->backprop = [o, src, flow, n, h, w, plane]() {
            if (!flow->requires_grad) return;
            flow->ensure_grad();
            for (int bn = 0; bn < n; ++bn) {
                const double* img = src->data.data() + static_cast<size_t>(bn) * plane;
                const double* u = flow->data.data() + static_cast<size_t>(bn) * 2 * plane;
                const double* v = u + plane;
                double* gu = flow->grad.data() + static_cast<size_t>(bn) * 2 * plane;
                double* gv = gu + plane;
                const double* go = o->grad.data() + static_cast<size_t>(bn) * plane;
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        const size_t i = static_cast<size_t>(y) * w + x;
                        const double sx = x + u[i];
                        const double sy = y + v[i];
                        // clamped samples have zero derivative w.r.t. the flow
                        const bool cx = sx <= 0.0 || sx >= w - 1;
                        const bool cy = sy <= 0.0 || sy >= h - 1;
                        const double csx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
                        const double csy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
                        const int x0 = std::min(static_cast<int>(csx), w - 2);
                        const int y0 = std::min(static_cast<int>(csy), h - 2);
                        const double fx = csx - x0;
                        const double fy = csy - y0;
                        const double* r0 = img + static_cast<size_t>(y0) * w;
                        const double* r1 = r0 + w;
                        if (!cx) {
                            const double dx = (1 - fy) * (r0[x0 + 1] - r0[x0]) +
                                              fy * (r1[x0 + 1] - r1[x0]);
                            gu[i] += go[i] * dx;
                        }
                        if (!cy) {
                            const double dy = (1 - fx) * (r1[x0] - r0[x0]) +
                                              fx * (r1[x0 + 1] - r0[x0 + 1]);
                            gv[i] += go[i] * dy;
                        }
                    }
                }
            }
        };
    }
    return out;
}

}  // namespace ctlc::nn
