#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ctlc/io.hpp"
#include "ctlc/nn.hpp"

namespace ctlc::nn {

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    require(param.size() == grad.size(), "adam_step: param/grad size mismatch");
    if (state.m.size() != param.size()) {
        require(state.m.empty() && state.v.empty(), "adam_step: state shape mismatch");
        state.m.assign(param.size(), 0.0);
        state.v.assign(param.size(), 0.0);
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < param.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void Adam::step(std::vector<Param>& params) {
    if (states.size() != params.size()) {
        require(states.empty(), "Adam::step: state count mismatch");
        states.resize(params.size());
    }
    for (size_t i = 0; i < params.size(); ++i) {
        auto& t = *params[i].tensor;
        if (t.grad.empty()) t.ensure_grad();  // zero grad: no-op update
        adam_step(t.data, t.grad, states[i], lr, beta1, beta2, eps);
    }
}

void Adam::zero_grad(std::vector<Param>& params) {
    for (auto& p : params) p.tensor->zero_grad();
}

// ---- checkpoint container -----------------------------------------------------

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void write_container(const std::filesystem::path& path, const nlohmann::json& manifest,
                     const std::vector<const std::vector<double>*>& payloads) {
    size_t total = 0;
    for (const auto* p : payloads) total += p->size();
    std::string head;
    head.append("CTLC");
    put_u16(head, io::kContainerVersion);
    head.push_back(static_cast<char>(io::Dtype::f64));
    head.push_back(1);  // rank 1: the concatenated payload
    put_u32(head, static_cast<uint32_t>(total));
    const std::string m = manifest.dump();
    put_u32(head, static_cast<uint32_t>(m.size()));
    head += m;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io::io_error("cannot open for writing: " + path.string());
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto* p : payloads)
        f.write(reinterpret_cast<const char*>(p->data()),
                static_cast<std::streamsize>(p->size() * sizeof(double)));
    if (!f) throw io::io_error("write failed: " + path.string());
}

struct Container {
    nlohmann::json manifest;
    std::vector<double> payload;
};

Container read_container(const std::filesystem::path& path, const char* expected_format) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io::io_error("cannot open: " + path.string());
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < 16 || std::memcmp(raw.data(), "CTLC", 4) != 0)
        throw io::io_error("not a CTLC container: " + path.string());
    if (raw[6] != static_cast<uint8_t>(io::Dtype::f64) || raw[7] != 1)
        throw io::io_error("unexpected checkpoint layout: " + path.string());
    const uint32_t total = get_u32(raw.data() + 8);
    const uint32_t mlen = get_u32(raw.data() + 12);
    const size_t head = 16 + static_cast<size_t>(mlen);
    if (raw.size() != head + static_cast<size_t>(total) * sizeof(double))
        throw io::io_error("checkpoint payload size mismatch: " + path.string());
    Container c;
    try {
        c.manifest = nlohmann::json::parse(raw.begin() + 16, raw.begin() + head);
    } catch (const nlohmann::json::exception& e) {
        throw io::io_error("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (c.manifest.value("format", "") != expected_format)
        throw io::io_error(std::string("expected a ") + expected_format + " container: " +
                           path.string());
    c.payload.resize(total);
    std::memcpy(c.payload.data(), raw.data() + head, static_cast<size_t>(total) * sizeof(double));
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<Param>& params,
                     int epoch) {
    nlohmann::json m;
    m["format"] = "ctlc-checkpoint";
    m["version"] = 1;
    m["epoch"] = epoch;
    m["params"] = nlohmann::json::array();
    std::vector<const std::vector<double>*> payloads;
    for (const auto& p : params) {
        m["params"].push_back({{"name", p.name}, {"shape", p.tensor->shape}});
        payloads.push_back(&p.tensor->data);
    }
    write_container(path, m, payloads);
}

int load_checkpoint(const std::filesystem::path& path, std::vector<Param>& params) {
    Container c = read_container(path, "ctlc-checkpoint");
    const auto& list = c.manifest.at("params");
    if (list.size() != params.size())
        throw io::io_error("checkpoint parameter count mismatch (" +
                           std::to_string(list.size()) + " stored, " +
                           std::to_string(params.size()) + " expected)");
    size_t off = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = list[i].at("name").get<std::string>();
        const std::vector<int> shape = list[i].at("shape").get<std::vector<int>>();
        if (name != params[i].name || shape != params[i].tensor->shape)
            throw io::io_error("checkpoint shape mismatch at parameter '" + params[i].name + "'");
        auto& dst = params[i].tensor->data;
        std::copy(c.payload.begin() + off, c.payload.begin() + off + dst.size(), dst.begin());
        off += dst.size();
    }
    return c.manifest.value("epoch", 0);
}

void save_adam_state(const std::filesystem::path& path, const Adam& opt) {
    nlohmann::json m;
    m["format"] = "ctlc-adam";
    m["version"] = 1;
    m["lr"] = opt.lr;
    m["beta1"] = opt.beta1;
    m["beta2"] = opt.beta2;
    m["eps"] = opt.eps;
    m["states"] = nlohmann::json::array();
    std::vector<const std::vector<double>*> payloads;
    for (const auto& s : opt.states) {
        m["states"].push_back({{"t", s.t}, {"numel", s.m.size()}});
        payloads.push_back(&s.m);
        payloads.push_back(&s.v);
    }
    write_container(path, m, payloads);
}

void load_adam_state(const std::filesystem::path& path, Adam& opt) {
    Container c = read_container(path, "ctlc-adam");
    opt.lr = c.manifest.at("lr").get<double>();
    opt.beta1 = c.manifest.at("beta1").get<double>();
    opt.beta2 = c.manifest.at("beta2").get<double>();
    opt.eps = c.manifest.at("eps").get<double>();
    opt.states.clear();
    size_t off = 0;
    for (const auto& s : c.manifest.at("states")) {
        AdamState st;
        st.t = s.at("t").get<int64_t>();
        const size_t n = s.at("numel").get<size_t>();
        st.m.assign(c.payload.begin() + off, c.payload.begin() + off + n);
        off += n;
        st.v.assign(c.payload.begin() + off, c.payload.begin() + off + n);
        off += n;
        opt.states.push_back(std::move(st));
    }
    if (off != c.payload.size()) throw io::io_error("optimizer state payload mismatch");
}

}  // namespace ctlc::nn
