#include "turbi/turbsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "turbi/image_io.hpp"

namespace turbi {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

void check_params(const TurbulenceParams& p) {
    if (p.patch_size <= 0 || p.patch_size % 2 == 0)
        throw std::invalid_argument("turbsim: patch_size must be odd and positive");
    if (p.positions_divisor <= 0)
        throw std::invalid_argument("turbsim: positions_divisor must be positive");
    if (p.strength_severe_lo > p.strength_severe_hi ||
        p.strength_mild_lo > p.strength_mild_hi)
        throw std::invalid_argument("turbsim: strength range reversed");
    if (p.blur_min_fraction <= 0.0 || p.blur_min_fraction > 1.0)
        throw std::invalid_argument("turbsim: blur_min_fraction outside (0,1]");
    if (p.noise_sigma < 0.0 || p.blur_sigma < 0.0)
        throw std::invalid_argument("turbsim: negative sigma");
}

} // namespace

void add_motion_patch(VectorField& field, double cx, double cy, double vx,
                      double vy, double shift_x, double shift_y,
                      double strength, int patch_size) {
    const double half = patch_size / 2.0;
    const double sigma = patch_size / 6.0;
    // Box of length patch_size convolved with the shifted Gaussian, in
    // closed form per axis. Evaluated only where the envelope is above the
    // 3-sigma tail; the cutoff depends on geometry alone, so patch
    // contributions stay exactly additive.
    auto profile = [&](double t, double center, double shift) {
        double d = t - center - shift;
        return normal_cdf((d + half) / sigma) - normal_cdf((d - half) / sigma);
    };
    const double reach = half + 3.0 * sigma;
    int x0 = std::max(0, static_cast<int>(std::ceil(cx + shift_x - reach)));
    int x1 = std::min(field.width - 1, static_cast<int>(std::floor(cx + shift_x + reach)));
    int y0 = std::max(0, static_cast<int>(std::ceil(cy + shift_y - reach)));
    int y1 = std::min(field.height - 1, static_cast<int>(std::floor(cy + shift_y + reach)));
    if (x0 > x1 || y0 > y1) return;

    std::vector<double> ex(static_cast<std::size_t>(x1 - x0 + 1));
    std::vector<double> ey(static_cast<std::size_t>(y1 - y0 + 1));
    for (int x = x0; x <= x1; ++x) ex[x - x0] = profile(x, cx, shift_x);
    for (int y = y0; y <= y1; ++y) ey[y - y0] = profile(y, cy, shift_y);

    for (int y = y0; y <= y1; ++y) {
        std::size_t row = static_cast<std::size_t>(y) * field.width;
        for (int x = x0; x <= x1; ++x) {
            double e = strength * ex[x - x0] * ey[y - y0];
            field.dx[row + x] += vx * e;
            field.dy[row + x] += vy * e;
        }
    }
}

VectorField make_field(int width, int height, const TurbulenceParams& params,
                       double strength, Rng& rng) {
    check_params(params);
    if (width < params.patch_size || height < params.patch_size)
        throw std::invalid_argument("make_field: image smaller than the motion patch");

    VectorField field(width, height);
    const std::size_t count =
        (static_cast<std::size_t>(width) * height) / params.positions_divisor;
    const double max_shift = params.patch_size / 8.0;
    for (std::size_t i = 0; i < count; ++i) {
        double cx = static_cast<double>(rng.uniform_index(width));
        double cy = static_cast<double>(rng.uniform_index(height));
        double vx = rng.normal();
        double vy = rng.normal();
        double sx = rng.uniform(-max_shift, max_shift);
        double sy = rng.uniform(-max_shift, max_shift);
        if (strength != 0.0)
            add_motion_patch(field, cx, cy, vx, vy, sx, sy, strength, params.patch_size);
    }
    return field;
}

GroundTruthBundle simulate(const ImageGrid& truth, int frame_count,
                           int severe_count, const TurbulenceParams& params,
                           int threads) {
    check_params(params);
    if (frame_count < 1) throw std::invalid_argument("simulate: frame_count < 1");
    if (severe_count < 0 || severe_count > frame_count)
        throw std::invalid_argument("simulate: severe_count out of range");

    GroundTruthBundle bundle;
    bundle.truth = truth;
    bundle.frames.resize(frame_count);
    bundle.fields.resize(frame_count);
    bundle.severe.resize(frame_count);
    bundle.strengths.resize(frame_count);
    bundle.blur_sigmas.resize(frame_count);

    parallel_for(static_cast<std::size_t>(frame_count), threads, [&](std::size_t t) {
        Rng rng = Rng::forked(params.seed, "turbsim.frame." + std::to_string(t));
        bool is_severe = static_cast<int>(t) < severe_count;
        double strength = is_severe
                              ? rng.uniform(params.strength_severe_lo, params.strength_severe_hi)
                              : rng.uniform(params.strength_mild_lo, params.strength_mild_hi);
        double sigma = rng.uniform(params.blur_min_fraction * params.blur_sigma,
                                   params.blur_sigma);
        VectorField field = make_field(truth.width, truth.height, params, strength, rng);

        ImageGrid frame = params.blur_before_warp
                              ? warp(gaussian_blur(truth, sigma), field)
                              : gaussian_blur(warp(truth, field), sigma);
        if (params.noise_sigma > 0.0) {
            for (double& v : frame.data) v += params.noise_sigma * rng.normal();
        }
        for (double& v : frame.data) v = clamp01(v);

        bundle.fields[t] = std::move(field);
        bundle.frames[t] = std::move(frame);
        bundle.severe[t] = is_severe ? 1 : 0;
        bundle.strengths[t] = strength;
        bundle.blur_sigmas[t] = sigma;
    });
    return bundle;
}

void save_bundle(const std::string& dir, const GroundTruthBundle& bundle) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(dir + "/frames");
    fs::create_directories(dir + "/fields");
    write_png16(dir + "/truth.png", bundle.truth);
    write_frame_dir(dir + "/frames", bundle.frames);

    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < bundle.frames.size(); ++t) {
        char flo[32];
        std::snprintf(flo, sizeof(flo), "field_%04zu.flo", t);
        write_flo(dir + "/fields/" + flo, bundle.fields[t]);
        char strength[40], sigma[40];
        std::snprintf(strength, sizeof(strength), "%.17g", bundle.strengths[t]);
        std::snprintf(sigma, sizeof(sigma), "%.17g", bundle.blur_sigmas[t]);
        rows.push_back({std::to_string(t), bundle.severe[t] ? "severe" : "mild",
                        strength, sigma});
    }
    write_csv(dir + "/labels.csv", {"frame", "label", "strength", "blur_sigma"}, rows);
}

GroundTruthBundle load_bundle(const std::string& dir) {
    GroundTruthBundle bundle;
    bundle.truth = read_png(dir + "/truth.png");
    bundle.frames = read_frame_dir(dir + "/frames");

    for (std::size_t t = 0; t < bundle.frames.size(); ++t) {
        char flo[32];
        std::snprintf(flo, sizeof(flo), "field_%04zu.flo", t);
        std::string path = dir + "/fields/" + flo;
        if (!std::filesystem::exists(path)) break;
        bundle.fields.push_back(read_flo(path));
    }

    std::ifstream labels(dir + "/labels.csv");
    if (labels) {
        std::string line;
        std::getline(labels, line);  // header
        while (std::getline(labels, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string frame, label, strength, sigma;
            std::getline(ss, frame, ',');
            std::getline(ss, label, ',');
            std::getline(ss, strength, ',');
            std::getline(ss, sigma, ',');
            bundle.severe.push_back(label == "severe" ? 1 : 0);
            bundle.strengths.push_back(std::stod(strength));
            bundle.blur_sigmas.push_back(std::stod(sigma));
        }
    }
    return bundle;
}

} // namespace turbi
