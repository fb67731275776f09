#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turbi/common.hpp"
#include "turbi/image.hpp"

namespace turbi {

struct TurbulenceParams {
    int patch_size = 65;          // odd, in pixels
    int positions_divisor = 250;  // patch count = floor(W * H / divisor)
    double strength_severe_lo = 1.0;
    double strength_severe_hi = 1.5;
    double strength_mild_lo = 0.2;
    double strength_mild_hi = 0.3;
    double blur_sigma = 1.0;        // per-frame sigma drawn in [fraction * sigma, sigma]
    double blur_min_fraction = 0.3; // decouples sharpness from distortion severity
    double noise_sigma = 0.0;       // additive Gaussian after blur; 0 = off
    bool blur_before_warp = false;  // order-sensitivity probe, normally off
    std::uint64_t seed = 1;
};

// A simulated sequence together with everything needed to check the
// pipeline against it: per-frame true deformation fields and labels.
struct GroundTruthBundle {
    ImageGrid truth;
    std::vector<ImageGrid> frames;
    std::vector<VectorField> fields;
    std::vector<int> severe;  // 1 = severe, 0 = mild
    std::vector<double> strengths;
    std::vector<double> blur_sigmas;
};

// Adds one motion patch to an accumulating field: a constant (vx, vy)
// square of side patch_size centered at (cx, cy), smoothed by a Gaussian
// whose mean is shifted by (shift_x, shift_y), scaled by strength. The
// smoothed envelope is evaluated in closed form per axis, so contributions
// from separate calls add exactly.
void add_motion_patch(VectorField& field, double cx, double cy, double vx,
                      double vy, double shift_x, double shift_y,
                      double strength, int patch_size);

// Random smooth deformation: floor(W*H/divisor) patches at uniform pixel
// positions, each a standard-normal 2-vector, summed where they overlap.
// Zero strength gives the zero field.
VectorField make_field(int width, int height, const TurbulenceParams& params,
                       double strength, Rng& rng);

// Distorts truth into frame_count frames. The first severe_count frames
// draw their strength from the severe range, the rest from the mild
// range. frame_t = clamp(blur(warp(truth, field_t)) + noise). Blur sigma
// varies per frame independently of the distortion strength, so sharp but
// severely distorted frames occur.
GroundTruthBundle simulate(const ImageGrid& truth, int frame_count,
                           int severe_count, const TurbulenceParams& params,
                           int threads = 1);

// Bundle layout on disk: truth.png, frames/frame_%04d.png,
// fields/field_%04d.flo, labels.csv (frame, label, strength, blur_sigma).
void save_bundle(const std::string& dir, const GroundTruthBundle& bundle);
GroundTruthBundle load_bundle(const std::string& dir);

} // namespace turbi
