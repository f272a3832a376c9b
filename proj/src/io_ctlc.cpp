#include <cstring>
#include <fstream>

#include "ctlc/io.hpp"

namespace ctlc::io {

namespace {

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_array(const std::filesystem::path& path, const Array& a) {
    if (a.dims.empty() || a.dims.size() > 8) throw io_error("save_array: bad rank");
    if (a.numel() != a.data.size()) throw io_error("save_array: dims do not match payload");
    std::string head;
    head.append("CTLC");
    put_u16(head, kContainerVersion);
    head.push_back(static_cast<char>(a.dtype));
    head.push_back(static_cast<char>(a.dims.size()));
    for (uint32_t d : a.dims) put_u32(head, d);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path.string());
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    if (a.dtype == Dtype::f32) {
        std::vector<float> buf(a.data.begin(), a.data.end());
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
        f.write(reinterpret_cast<const char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!f) throw io_error("write failed: " + path.string());
}

Array load_array(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path.string());
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < 8) throw io_error("truncated container: " + path.string());
    if (std::memcmp(raw.data(), "CTLC", 4) != 0)
        throw io_error("bad magic (not a CTLC container): " + path.string());
    const uint16_t version = get_u16(raw.data() + 4);
    if (version != kContainerVersion) throw io_error("unsupported container version");
    const uint8_t dtype = raw[6];
    const uint8_t rank = raw[7];
    if (dtype > 1) throw io_error("unknown dtype tag");
    if (rank == 0 || rank > 8) throw io_error("bad rank");
    const size_t head = 8 + static_cast<size_t>(rank) * 4;
    if (raw.size() < head) throw io_error("truncated container header");
    Array a;
    a.dtype = static_cast<Dtype>(dtype);
    a.dims.resize(rank);
    for (int i = 0; i < rank; ++i) {
        a.dims[i] = get_u32(raw.data() + 8 + 4 * i);
        if (a.dims[i] == 0) throw io_error("zero dimension");
    }
    const size_t n = a.numel();
    const size_t elem = (a.dtype == Dtype::f32) ? 4 : 8;
    if (raw.size() != head + n * elem)
        throw io_error("payload size mismatch: " + path.string());
    a.data.resize(n);
    if (a.dtype == Dtype::f32) {
        const float* p = reinterpret_cast<const float*>(raw.data() + head);
        for (size_t i = 0; i < n; ++i) a.data[i] = p[i];
    } else {
        std::memcpy(a.data.data(), raw.data() + head, n * sizeof(double));
    }
    return a;
}

void save_image(const std::filesystem::path& path, const Image& img, Dtype dtype) {
    Array a;
    a.dtype = dtype;
    a.dims = {static_cast<uint32_t>(img.height), static_cast<uint32_t>(img.width)};
    a.data = img.data;
    save_array(path, a);
}

Image load_image(const std::filesystem::path& path) {
    Array a = load_array(path);
    if (a.dims.size() != 2) throw io_error("expected rank-2 image: " + path.string());
    Image img(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]));
    img.data = std::move(a.data);
    return img;
}

void save_sinogram(const std::filesystem::path& path, const Sinogram& s, Dtype dtype) {
    Array a;
    a.dtype = dtype;
    a.dims = {static_cast<uint32_t>(s.n_views), static_cast<uint32_t>(s.n_detectors)};
    a.data = s.data;
    save_array(path, a);
}

Sinogram load_sinogram(const std::filesystem::path& path) {
    Array a = load_array(path);
    if (a.dims.size() != 2) throw io_error("expected rank-2 sinogram: " + path.string());
    Sinogram s(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]));
    s.data = std::move(a.data);
    return s;
}

void save_flow(const std::filesystem::path& path, const FlowField& fl, Dtype dtype) {
    Array a;
    a.dtype = dtype;
    a.dims = {2u, static_cast<uint32_t>(fl.height), static_cast<uint32_t>(fl.width)};
    a.data.reserve(2 * fl.size());
    a.data.insert(a.data.end(), fl.u.begin(), fl.u.end());
    a.data.insert(a.data.end(), fl.v.begin(), fl.v.end());
    save_array(path, a);
}

FlowField load_flow(const std::filesystem::path& path) {
    Array a = load_array(path);
    if (a.dims.size() != 3 || a.dims[0] != 2)
        throw io_error("expected rank-3 (2 x H x W) flow field: " + path.string());
    FlowField fl(static_cast<int>(a.dims[1]), static_cast<int>(a.dims[2]));
    const size_t plane = fl.size();
    std::copy(a.data.begin(), a.data.begin() + plane, fl.u.begin());
    std::copy(a.data.begin() + plane, a.data.end(), fl.v.begin());
    return fl;
}

void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path.string());
    f << header << "\n";
    for (const auto& r : rows) f << r << "\n";
    if (!f) throw io_error("write failed: " + path.string());
}

}  // namespace ctlc::io
