#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ctlc/io.hpp"

namespace ctlc::io {

namespace {

void put_u32_be(std::string& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    put_u32_be(out, static_cast<uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    put_u32_be(out, crc);
}

void write_png(const std::filesystem::path& path, int height, int width, int channels,
               const std::vector<uint8_t>& pixels) {
    if (height <= 0 || width <= 0 || (channels != 1 && channels != 3))
        throw io_error("write_png: bad dimensions");
    if (pixels.size() != static_cast<size_t>(height) * width * channels)
        throw io_error("write_png: pixel buffer size mismatch");

    // scanlines with filter byte 0
    const size_t row_bytes = static_cast<size_t>(width) * channels;
    std::vector<uint8_t> raw((row_bytes + 1) * height);
    for (int y = 0; y < height; ++y) {
        raw[y * (row_bytes + 1)] = 0;
        std::memcpy(raw.data() + y * (row_bytes + 1) + 1, pixels.data() + y * row_bytes,
                    row_bytes);
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> deflated(bound);
    if (::compress2(deflated.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK)
        throw io_error("write_png: deflate failed");
    deflated.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(width));
    put_u32_be(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);          // gray / RGB
    ihdr.push_back(0);                              // compression
    ihdr.push_back(0);                              // filter
    ihdr.push_back(0);                              // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT",
                 std::string(reinterpret_cast<const char*>(deflated.data()), deflated.size()));
    append_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("write failed: " + path.string());
}

uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

// RGB canvas with simple drawing primitives.
struct Canvas {
    int h, w;
    std::vector<uint8_t> px;
    Canvas(int height, int width, uint8_t fill = 255)
        : h(height), w(width), px(static_cast<size_t>(height) * width * 3, fill) {}

    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        uint8_t* p = px.data() + (static_cast<size_t>(y) * w + x) * 3;
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
        int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }

    void text(int x, int y, const std::string& s, uint8_t r, uint8_t g, uint8_t b);
};

// 5x7 bitmap font: digits, uppercase, and a handful of symbols. Lowercase is
// folded to uppercase.
const char* glyph(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case '0': return "01110100011001110101110011000101110";
        case '1': return "00100011000010000100001000010001110";
        case '2': return "01110100010000100110010001000011111";
        case '3': return "01110100010000100110000011000101110";
        case '4': return "00010001100101010010111110001000010";
        case '5': return "11111100001111000001000011000101110";
        case '6': return "00110010001000011110100011000101110";
        case '7': return "11111000010001000100010001000010000";
        case '8': return "01110100011000101110100011000101110";
        case '9': return "01110100011000101111000010001001100";
        case 'A': return "00100010101000110001111111000110001";
        case 'B': return "11110100011000111110100011000111110";
        case 'C': return "01110100011000010000100001000101110";
        case 'D': return "11100100101000110001100011001011100";
        case 'E': return "11111100001000011110100001000011111";
        case 'F': return "11111100001000011110100001000010000";
        case 'G': return "01110100011000010111100011000101111";
        case 'H': return "10001100011000111111100011000110001";
        case 'I': return "01110001000010000100001000010001110";
        case 'J': return "00111000100001000010000101001001100";
        case 'K': return "10001100101010011000101001001010001";
        case 'L': return "10000100001000010000100001000011111";
        case 'M': return "10001110111010110101100011000110001";
        case 'N': return "10001110011010110011100011000110001";
        case 'O': return "01110100011000110001100011000101110";
        case 'P': return "11110100011000111110100001000010000";
        case 'Q': return "01110100011000110001101011001001101";
        case 'R': return "11110100011000111110101001001010001";
        case 'S': return "01111100001000001110000010000111110";
        case 'T': return "11111001000010000100001000010000100";
        case 'U': return "10001100011000110001100011000101110";
        case 'V': return "10001100011000110001100010101000100";
        case 'W': return "10001100011000110101101011101110001";
        case 'X': return "10001100010101000100010101000110001";
        case 'Y': return "10001100010101000100001000010000100";
        case 'Z': return "11111000010001000100010001000011111";
        case '.': return "00000000000000000000000000110001100";
        case ',': return "00000000000000000000001100011000100";
        case '-': return "00000000000000011111000000000000000";
        case '+': return "00000001000010011111001000010000000";
        case ':': return "00000011000110000000011000110000000";
        case '/': return "00001000010001000100010001000010000";
        case '(': return "00010001000100001000010000010000010";
        case ')': return "01000001000001000010000100010001000";
        case '=': return "00000000001111100000111110000000000";
        case '_': return "00000000000000000000000000000011111";
        case '%': return "11001110010001000100010001001110011";
        default: return nullptr;  // space and unknowns
    }
}

void Canvas::text(int x, int y, const std::string& s, uint8_t r, uint8_t g, uint8_t b) {
    int cx = x;
    for (char c : s) {
        if (const char* bits = glyph(c)) {
            for (int gy = 0; gy < 7; ++gy)
                for (int gx = 0; gx < 5; ++gx)
                    if (bits[gy * 5 + gx] == '1') set(cx + gx, y + gy, r, g, b);
        }
        cx += 6;
    }
}

void heat_color(double t, uint8_t& r, uint8_t& g, uint8_t& b) {
    t = std::clamp(t, 0.0, 1.0);
    r = to_byte(std::clamp(1.5 * t - 0.25, 0.0, 1.0));
    g = to_byte(std::clamp(1.5 - std::abs(2.0 * t - 1.0) * 1.5, 0.0, 1.0));
    b = to_byte(std::clamp(1.25 - 1.5 * t, 0.0, 1.0));
}

const uint8_t kPalette[6][3] = {{214, 39, 40},  {31, 119, 180}, {44, 160, 44},
                                {255, 127, 14}, {148, 103, 189}, {23, 190, 207}};

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Image& img) {
    std::vector<uint8_t> px(img.size());
    for (size_t i = 0; i < img.size(); ++i) px[i] = to_byte(img.data[i]);
    write_png(path, img.height, img.width, 1, px);
}

void write_png_rgb(const std::filesystem::path& path, int height, int width,
                   const std::vector<uint8_t>& rgb) {
    write_png(path, height, width, 3, rgb);
}

Image montage_row(const std::vector<const Image*>& panels, int gap, double gap_value) {
    require(!panels.empty(), "montage_row: no panels");
    const int h = panels[0]->height;
    int total_w = 0;
    for (const Image* p : panels) {
        require(p->height == h, "montage_row: panel heights differ");
        total_w += p->width;
    }
    total_w += gap * (static_cast<int>(panels.size()) - 1);
    Image out(h, total_w, gap_value);
    int x0 = 0;
    for (const Image* p : panels) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < p->width; ++x) out.at(y, x0 + x) = p->at(y, x);
        x0 += p->width + gap;
    }
    return out;
}

void write_flow_heatmap(const std::filesystem::path& path, const FlowField& f) {
    double max_mag = 1e-12;
    std::vector<double> mag(f.size());
    for (size_t i = 0; i < f.size(); ++i) {
        mag[i] = std::hypot(f.u[i], f.v[i]);
        max_mag = std::max(max_mag, mag[i]);
    }
    std::vector<uint8_t> rgb(f.size() * 3);
    for (size_t i = 0; i < f.size(); ++i) {
        uint8_t r, g, b;
        heat_color(mag[i] / max_mag, r, g, b);
        rgb[3 * i] = r;
        rgb[3 * i + 1] = g;
        rgb[3 * i + 2] = b;
    }
    write_png(path, f.height, f.width, 3, rgb);
}

void write_flow_arrows(const std::filesystem::path& path, const Image& background,
                       const FlowField& f, int stride, double scale) {
    require(background.height == f.height && background.width == f.width,
            "write_flow_arrows: dimension mismatch");
    Canvas cv(f.height, f.width);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const uint8_t g = to_byte(background.at(y, x));
            cv.set(x, y, g, g, g);
        }
    for (int y = stride / 2; y < f.height; y += stride)
        for (int x = stride / 2; x < f.width; x += stride) {
            const size_t i = static_cast<size_t>(y) * f.width + x;
            const int x1 = x + static_cast<int>(std::lround(scale * f.u[i]));
            const int y1 = y + static_cast<int>(std::lround(scale * f.v[i]));
            cv.line(x, y, x1, y1, 255, 40, 40);
            cv.set(x, y, 255, 220, 40);
        }
    write_png(path, cv.h, cv.w, 3, cv.px);
}

void write_line_plot(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, int width, int height) {
    require(!series.empty(), "write_line_plot: no series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        require(s.x.size() == s.y.size(), "write_line_plot: x/y size mismatch");
        for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
        for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const int ml = 64, mr = 16, mt = 28, mb = 40;
    Canvas cv(height, width);
    auto px = [&](double x) {
        return ml + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (width - ml - mr)));
    };
    auto py = [&](double y) {
        return height - mb -
               static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (height - mt - mb)));
    };
    cv.line(ml, mt, ml, height - mb, 0, 0, 0);
    cv.line(ml, height - mb, width - mr, height - mb, 0, 0, 0);
    cv.text(ml, 8, title, 0, 0, 0);
    cv.text(width / 2 - static_cast<int>(x_label.size()) * 3, height - 14, x_label, 0, 0, 0);
    cv.text(4, mt - 12, y_label, 0, 0, 0);
    char buf[32];
    for (int i = 0; i <= 4; ++i) {
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const int yy = py(yv);
        cv.line(ml - 3, yy, ml, yy, 0, 0, 0);
        std::snprintf(buf, sizeof buf, "%.2f", yv);
        cv.text(4, yy - 3, buf, 0, 0, 0);
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const int xx = px(xv);
        cv.line(xx, height - mb, xx, height - mb + 3, 0, 0, 0);
        std::snprintf(buf, sizeof buf, "%g", xv);
        cv.text(xx - 8, height - mb + 6, buf, 0, 0, 0);
    }
    for (size_t si = 0; si < series.size(); ++si) {
        const uint8_t* col = kPalette[si % 6];
        const auto& s = series[si];
        for (size_t i = 0; i + 1 < s.x.size(); ++i)
            cv.line(px(s.x[i]), py(s.y[i]), px(s.x[i + 1]), py(s.y[i + 1]), col[0], col[1],
                    col[2]);
        for (size_t i = 0; i < s.x.size(); ++i) {
            const int cx = px(s.x[i]), cy = py(s.y[i]);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) cv.set(cx + dx, cy + dy, col[0], col[1], col[2]);
        }
        cv.text(width - mr - 120, mt + 10 * static_cast<int>(si), s.label, col[0], col[1],
                col[2]);
    }
    write_png(path, cv.h, cv.w, 3, cv.px);
}

}  // namespace ctlc::io
