#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "turbi/image.hpp"
#include "turbi/image_io.hpp"
#include "test_util.hpp"

using namespace turbi;
using turbi_test::make_scene;

TEST_CASE("warp with zero field is the identity, bit for bit") {
    ImageGrid img = make_scene(37, 29, 11);
    VectorField zero(37, 29);
    ImageGrid out = warp(img, zero);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(out.data[i] == img.data[i]);
}

TEST_CASE("warp of a ramp by a unit horizontal field shifts one column") {
    const int w = 16, h = 8;
    ImageGrid ramp(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            ramp.at(x, y) = static_cast<double>(x) / (w - 1);
    VectorField f(w, h);
    for (auto& v : f.dx) v = 1.0;
    ImageGrid out = warp(ramp, f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w - 1; ++x)
            CHECK(out.at(x, y) == doctest::Approx(static_cast<double>(x + 1) / (w - 1)).epsilon(1e-12));
}

TEST_CASE("warp clamps out-of-range coordinates and stays in [0,1]") {
    ImageGrid img(5, 5, 0.5);
    img.at(0, 0) = 1.0;
    VectorField f(5, 5);
    for (auto& v : f.dx) v = -40.0;
    for (auto& v : f.dy) v = 40.0;
    ImageGrid out = warp(img, f);
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // All samples land on the bottom-left pixel.
    CHECK(out.at(3, 3) == img.at(0, 4));
}

TEST_CASE("laplacian of a center spike") {
    ImageGrid img(3, 3, 0.0);
    img.at(1, 1) = 1.0;
    ImageGrid lap = laplacian(img);
    CHECK(lap.at(1, 1) == doctest::Approx(-4.0));
    CHECK(lap.at(0, 1) == doctest::Approx(1.0));
    CHECK(lap.at(2, 1) == doctest::Approx(1.0));
    CHECK(lap.at(1, 0) == doctest::Approx(1.0));
    CHECK(lap.at(1, 2) == doctest::Approx(1.0));
    CHECK(lap.at(0, 0) == doctest::Approx(0.0));
    CHECK(lap.at(2, 0) == doctest::Approx(0.0));
    CHECK(lap.at(0, 2) == doctest::Approx(0.0));
    CHECK(lap.at(2, 2) == doctest::Approx(0.0));
    double l1 = 0.0;
    for (double v : lap.data) l1 += std::fabs(v);
    CHECK(l1 == doctest::Approx(8.0));
}

TEST_CASE("laplacian of a constant image is zero") {
    ImageGrid img(9, 7, 0.37);
    ImageGrid lap = laplacian(img);
    for (double v : lap.data) CHECK(std::fabs(v) < 1e-14);
}

TEST_CASE("laplacian rejects degenerate sizes") {
    ImageGrid img(2, 5, 0.0);
    CHECK_THROWS_AS(laplacian(img), std::invalid_argument);
}

TEST_CASE("psnr of identical images hits the cap") {
    ImageGrid img = make_scene(24, 24, 3);
    CHECK(psnr(img, img) == doctest::Approx(99.0));
}

TEST_CASE("psnr of a uniform 10/255 offset") {
    ImageGrid a(16, 16, 100.0 / 255.0);
    ImageGrid b(16, 16, 110.0 / 255.0);
    double expect = 20.0 * std::log10(25.5);
    CHECK(psnr(a, b) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(psnr(a, b) == doctest::Approx(28.13080361).epsilon(1e-6));
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
}

TEST_CASE("psnr of complementary binary images is 0 dB") {
    ImageGrid a(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            a.at(x, y) = (x < 5) ? 0.0 : 1.0;
    ImageGrid b = a;
    for (double& v : b.data) v = 1.0 - v;
    CHECK(psnr(a, b) == doctest::Approx(0.0));
}

TEST_CASE("psnr rejects dimension mismatch") {
    ImageGrid a(4, 4), b(4, 5);
    CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
}

TEST_CASE("ssim of two constant images matches the closed form") {
    ImageGrid a(12, 12, 0.5);
    ImageGrid b(12, 12, 0.7);
    // Zero variance: the structure factor is exactly 1, leaving the
    // luminance ratio (2*0.5*0.7 + C1) / (0.25 + 0.49 + C1).
    double expect = (2.0 * 0.5 * 0.7 + 1e-4) / (0.25 + 0.49 + 1e-4);
    CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.9460).epsilon(2e-4));
}

TEST_CASE("ssim is 1 for identical images and symmetric under noise") {
    ImageGrid a = make_scene(32, 32, 5);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    ImageGrid b = a;
    Rng rng(99);
    for (double& v : b.data) v = clamp01(v + 0.005 * rng.normal());
    double s = ssim(a, b);
    CHECK(s > 0.9);
    CHECK(s < 1.0);
    CHECK(ssim(b, a) == doctest::Approx(s));
}

TEST_CASE("ssim rejects images smaller than the window") {
    ImageGrid a(7, 12, 0.5), b(7, 12, 0.5);
    CHECK_THROWS_AS(ssim(a, b), std::invalid_argument);
}

TEST_CASE("gaussian blur does not increase laplacian mass") {
    int pass = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        ImageGrid img = make_scene(24, 24, 1000 + t);
        Rng rng(2000 + t);
        double sigma = rng.uniform(0.5, 2.0);
        ImageGrid blurred = gaussian_blur(img, sigma);
        auto l1 = [](const ImageGrid& g) {
            double s = 0.0;
            for (double v : laplacian(g).data) s += std::fabs(v);
            return s;
        };
        if (l1(blurred) <= l1(img) + 1e-12) ++pass;
    }
    CHECK(pass >= 99);
}

TEST_CASE("png round trip preserves 16-bit data exactly") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "turbi_png_test";
    fs::create_directories(dir);
    ImageGrid img = make_scene(21, 17, 7);
    // Snap to the 16-bit lattice so the round trip is exact.
    for (double& v : img.data) v = std::round(v * 65535.0) / 65535.0;
    std::string p = (dir / "img16.png").string();
    write_png16(p, img);
    ImageGrid back = read_png(p);
    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));

    std::string p8 = (dir / "img8.png").string();
    write_png8(p8, img);
    ImageGrid back8 = read_png(p8);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(std::fabs(back8.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("pgm round trip at both depths") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "turbi_pgm_test";
    fs::create_directories(dir);
    ImageGrid img = make_scene(15, 11, 9);
    for (double& v : img.data) v = std::round(v * 65535.0) / 65535.0;
    std::string p = (dir / "img.pgm").string();
    write_pgm(p, img, 65535);
    ImageGrid back = read_pgm(p);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
    write_pgm(p, img, 255);
    back = read_pgm(p);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(std::fabs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("flow dump round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "turbi_flo_test";
    fs::create_directories(dir);
    VectorField f = turbi_test::make_smooth_field(13, 9, 4, 2.5);
    std::string p = (dir / "f.flo").string();
    write_flo(p, f);
    VectorField back = read_flo(p);
    REQUIRE(back.width == f.width);
    REQUIRE(back.height == f.height);
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(back.dx[i] == doctest::Approx(f.dx[i]).epsilon(1e-6));
        CHECK(back.dy[i] == doctest::Approx(f.dy[i]).epsilon(1e-6));
    }
    fs::remove_all(dir);
}

TEST_CASE("box_mean of a constant image is that constant, including borders") {
    ImageGrid img(10, 6, 0.42);
    ImageGrid m = box_mean(img, 3);
    for (double v : m.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
}
