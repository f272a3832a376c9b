#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctlc/io.hpp"
#include "ctlc/rng.hpp"

using namespace ctlc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto d = fs::temp_directory_path() / "ctlc_test_io";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("image round trip preserves values at dtype precision") {
    Rng rng(11);
    Image img(13, 17);
    for (auto& v : img.data) v = rng.uniform();

    const auto p64 = temp_dir() / "img64.ctlc";
    io::save_image(p64, img, io::Dtype::f64);
    const Image back = io::load_image(p64);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    for (size_t i = 0; i < img.size(); ++i) CHECK(back.data[i] == img.data[i]);

    const auto p32 = temp_dir() / "img32.ctlc";
    io::save_image(p32, img, io::Dtype::f32);
    const Image back32 = io::load_image(p32);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(back32.data[i] == doctest::Approx(img.data[i]).epsilon(1e-7));
}

TEST_CASE("sinogram and flow round trips") {
    Rng rng(5);
    Sinogram s(7, 9);
    for (auto& v : s.data) v = rng.gaussian();
    const auto ps = temp_dir() / "sino.ctlc";
    io::save_sinogram(ps, s);
    const Sinogram sb = io::load_sinogram(ps);
    CHECK(sb.n_views == 7);
    CHECK(sb.n_detectors == 9);
    CHECK(sb.data == s.data);

    FlowField f(6, 8);
    for (auto& v : f.u) v = rng.gaussian();
    for (auto& v : f.v) v = rng.gaussian();
    const auto pf = temp_dir() / "flow.ctlc";
    io::save_flow(pf, f);
    const FlowField fb = io::load_flow(pf);
    CHECK(fb.u == f.u);
    CHECK(fb.v == f.v);
}

TEST_CASE("container header is the documented layout") {
    io::Array a;
    a.dtype = io::Dtype::f32;
    a.dims = {2, 3};
    a.data = {1, 2, 3, 4, 5, 6};
    const auto p = temp_dir() / "layout.ctlc";
    io::save_array(p, a);

    std::ifstream f(p, std::ios::binary);
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    REQUIRE(raw.size() == 8 + 2 * 4 + 6 * 4);
    CHECK(raw[0] == 'C');
    CHECK(raw[1] == 'T');
    CHECK(raw[2] == 'L');
    CHECK(raw[3] == 'C');
    CHECK(raw[4] == 1);  // version u16 LE
    CHECK(raw[5] == 0);
    CHECK(raw[6] == 0);  // dtype f32
    CHECK(raw[7] == 2);  // rank
    CHECK(raw[8] == 2);  // dim0 = 2
    CHECK(raw[12] == 3); // dim1 = 3
}

TEST_CASE("load rejects corrupt containers distinctly") {
    const auto p = temp_dir() / "bad.ctlc";
    {
        std::ofstream f(p, std::ios::binary);
        f << "NOPE    ";
    }
    CHECK_THROWS_WITH_AS(io::load_array(p), doctest::Contains("bad magic"), io::io_error);

    io::Array a;
    a.dims = {4};
    a.data = {1, 2, 3, 4};
    io::save_array(p, a);
    // truncate the payload
    fs::resize_file(p, fs::file_size(p) - 8);
    CHECK_THROWS_WITH_AS(io::load_array(p), doctest::Contains("size mismatch"), io::io_error);

    CHECK_THROWS_AS(io::load_array(temp_dir() / "does_not_exist.ctlc"), io::io_error);
}

TEST_CASE("png export writes a valid signature and montage composes panels") {
    Image a(16, 16, 0.25), b(16, 16, 0.75);
    const Image m = io::montage_row({&a, &b}, 2, 1.0);
    CHECK(m.width == 16 + 2 + 16);
    CHECK(m.at(8, 0) == 0.25);
    CHECK(m.at(8, 17) == 1.0);   // separator
    CHECK(m.at(8, 20) == 0.75);

    const auto p = temp_dir() / "gray.png";
    io::write_png_gray(p, m);
    std::ifstream f(p, std::ios::binary);
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    REQUIRE(raw.size() > 8);
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    for (int i = 0; i < 8; ++i) CHECK(raw[i] == sig[i]);
}

TEST_CASE("png helpers for flow debugging and plots run end to end") {
    FlowField f(32, 32);
    for (size_t i = 0; i < f.size(); ++i) f.u[i] = 1.0;
    io::write_flow_heatmap(temp_dir() / "heat.png", f);
    io::write_flow_arrows(temp_dir() / "arrows.png", Image(32, 32, 0.5), f);
    io::write_line_plot(temp_dir() / "plot.png", "TEST", "x", "y",
                        {{"a", {30, 60, 120}, {10, 20, 25}}, {"b", {30, 60, 120}, {5, 15, 30}}});
    CHECK(fs::exists(temp_dir() / "heat.png"));
    CHECK(fs::exists(temp_dir() / "arrows.png"));
    CHECK(fs::exists(temp_dir() / "plot.png"));
}

TEST_CASE("csv writer emits header plus rows") {
    const auto p = temp_dir() / "t.csv";
    io::write_csv(p, "a,b", {"1,2", "3,4"});
    std::ifstream f(p);
    std::string l1, l2, l3;
    std::getline(f, l1);
    std::getline(f, l2);
    std::getline(f, l3);
    CHECK(l1 == "a,b");
    CHECK(l2 == "1,2");
    CHECK(l3 == "3,4");
}
