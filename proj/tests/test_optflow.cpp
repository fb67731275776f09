#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "turbi/optflow.hpp"
#include "test_util.hpp"

using namespace turbi;
using turbi_test::make_scene;
using turbi_test::make_smooth_field;

namespace {

// Crops a window out of an oversized scene so shifted/rotated variants never
// touch replicated borders.
ImageGrid crop(const ImageGrid& big, double x0, double y0, int w, int h) {
    ImageGrid out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = sample_bilinear(big, x0 + x, y0 + y);
    return out;
}

double interior_epe(const VectorField& est, double tx, double ty, double frac = 0.8) {
    int bx = static_cast<int>(est.width * (1.0 - frac) / 2.0);
    int by = static_cast<int>(est.height * (1.0 - frac) / 2.0);
    double s = 0.0;
    std::size_t c = 0;
    for (int y = by; y < est.height - by; ++y)
        for (int x = bx; x < est.width - bx; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * est.width + x;
            s += std::hypot(est.dx[i] - tx, est.dy[i] - ty);
            ++c;
        }
    return s / static_cast<double>(c);
}

} // namespace

TEST_CASE("identical images give a near-zero field") {
    ImageGrid img = make_scene(64, 64, 1);
    VectorField w = flow(img, img);
    CHECK(mean_magnitude(w) < 0.05);
}

TEST_CASE("integer translation is recovered within a quarter pixel") {
    const int n = 96;
    ImageGrid big = make_scene(n + 16, n + 16, 2);
    ImageGrid to = crop(big, 8, 8, n, n);
    ImageGrid from = crop(big, 6, 7, n, n); // content of `to` moved by (+2, +1)
    auto t0 = std::chrono::steady_clock::now();
    VectorField w = flow(from, to);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("96x96 flow solve took " << dt << " s");
    CHECK(interior_epe(w, 2.0, 1.0) < 0.25);
    // The recovered field must also explain the pair better than inaction.
    CHECK(flow_energy(from, to, w).total < flow_energy(from, to, VectorField(n, n)).total);
}

TEST_CASE("half-degree rotation is recovered within 0.3 px") {
    const int n = 96;
    const double theta = 0.5 * M_PI / 180.0;
    ImageGrid big = make_scene(n + 32, n + 32, 3);
    ImageGrid to = crop(big, 16, 16, n, n);
    const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
    ImageGrid from(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double rx = std::cos(theta) * (x - cx) - std::sin(theta) * (y - cy);
            double ry = std::sin(theta) * (x - cx) + std::cos(theta) * (y - cy);
            from.at(x, y) = sample_bilinear(big, 16 + cx + rx, 16 + cy + ry);
        }
    VectorField w = flow(from, to);
    // True displacement: rotate by -theta about the center, minus identity.
    double s = 0.0;
    std::size_t c = 0;
    int b = n / 10;
    for (int y = b; y < n - b; ++y)
        for (int x = b; x < n - b; ++x) {
            double tx = std::cos(theta) * (x - cx) + std::sin(theta) * (y - cy) + cx - x;
            double ty = -std::sin(theta) * (x - cx) + std::cos(theta) * (y - cy) + cy - y;
            std::size_t i = static_cast<std::size_t>(y) * n + x;
            s += std::hypot(w.dx[i] - tx, w.dy[i] - ty);
            ++c;
        }
    CHECK(s / c < 0.3);
}

TEST_CASE("solver output energy never exceeds the zero field on random warps") {
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
        ImageGrid to = make_scene(48, 48, seed);
        VectorField f = make_smooth_field(48, 48, seed + 100, 1.5);
        ImageGrid from = warp(to, f);
        VectorField w = flow(from, to);
        double e_est = flow_energy(from, to, w).total;
        double e_zero = flow_energy(from, to, VectorField(48, 48)).total;
        CHECK(e_est <= e_zero + 1e-12);
    }
}

TEST_CASE("flow_energy on the zero field between identical images") {
    ImageGrid img = make_scene(32, 32, 4);
    VectorField zero(32, 32);
    FlowEnergy e = flow_energy(img, img, zero);
    const double area = 32.0 * 32.0;
    const double psi0 = std::sqrt(1e-6);
    CHECK(e.smoothness == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(e.data == doctest::Approx(psi0 * area).epsilon(1e-12));
    CHECK(e.gradient == doctest::Approx(psi0 * area).epsilon(1e-12));
}

TEST_CASE("doubling alpha doubles exactly the smoothness contribution") {
    ImageGrid to = make_scene(32, 32, 5);
    ImageGrid from = make_scene(32, 32, 6);
    VectorField f = make_smooth_field(32, 32, 7, 2.0);
    FlowParams p1, p2;
    p2.alpha = 2.0 * p1.alpha;
    FlowEnergy e1 = flow_energy(from, to, f, p1);
    FlowEnergy e2 = flow_energy(from, to, f, p2);
    CHECK(e2.smoothness == doctest::Approx(e1.smoothness).epsilon(1e-15));
    CHECK(e2.total - e1.total == doctest::Approx(p1.alpha * e1.smoothness).epsilon(1e-12));
}

TEST_CASE("true translation has lower energy than the zero field") {
    const int n = 48;
    ImageGrid big = make_scene(n + 8, n + 8, 8);
    ImageGrid to = crop(big, 4, 4, n, n);
    ImageGrid from = crop(big, 3, 4, n, n);
    VectorField truth(n, n);
    for (auto& v : truth.dx) v = 1.0;
    CHECK(flow_energy(from, to, truth).total < flow_energy(from, to, VectorField(n, n)).total);
}

TEST_CASE("half-resolution solve lands within 25 percent of the full solve energy") {
    int agree = 0;
    const int trials = 8;
    for (int t = 0; t < trials; ++t) {
        const int n = 64;
        ImageGrid to = make_scene(n, n, 300 + t);
        VectorField f = make_smooth_field(n, n, 400 + t, 1.2);
        ImageGrid from = warp(to, f);
        double e_full = flow_energy(from, to, flow(from, to)).total;

        ImageGrid to2 = resize_bilinear(gaussian_blur(to, 0.8), n / 2, n / 2);
        ImageGrid from2 = resize_bilinear(gaussian_blur(from, 0.8), n / 2, n / 2);
        VectorField w2 = flow(from2, to2);
        ImageGrid cu(n / 2, n / 2), cv(n / 2, n / 2);
        cu.data = w2.dx;
        cv.data = w2.dy;
        ImageGrid fu = resize_bilinear(cu, n, n), fv = resize_bilinear(cv, n, n);
        VectorField up(n, n);
        for (std::size_t i = 0; i < up.size(); ++i) {
            up.dx[i] = 2.0 * fu.data[i];
            up.dy[i] = 2.0 * fv.data[i];
        }
        double e_half = flow_energy(from, to, up).total;
        if (std::fabs(e_half - e_full) <= 0.25 * e_full) ++agree;
    }
    CHECK(agree >= trials - 1);
}

TEST_CASE("input validation") {
    ImageGrid a(20, 20, 0.5), b(20, 21, 0.5), tiny(12, 30, 0.5);
    CHECK_THROWS_AS(flow(a, b), std::invalid_argument);
    CHECK_THROWS_AS(flow(tiny, tiny), std::invalid_argument);
    FlowParams deep;
    deep.levels = 6;
    CHECK_THROWS_AS(flow(a, a, deep), std::invalid_argument);
    VectorField f(19, 20);
    CHECK_THROWS_AS(flow_energy(a, a, f), std::invalid_argument);
}

TEST_CASE("displacement probe reports the recovery ceiling") {
    // Not a spec bound; documents how far a constant shift can be before
    // accuracy degrades, for the record.
    const int n = 96;
    ImageGrid big = make_scene(n + 40, n + 40, 9);
    ImageGrid to = crop(big, 20, 20, n, n);
    for (double shift : {1.0, 2.0, 4.0, 8.0}) {
        ImageGrid from = crop(big, 20 - shift, 20, n, n);
        VectorField w = flow(from, to);
        MESSAGE("shift " << shift << " px -> mean EPE " << interior_epe(w, shift, 0.0));
    }
    CHECK(true);
}
