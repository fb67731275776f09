#pragma once

#include <vector>

#include "turbi/image.hpp"

namespace turbi {

struct DeblurParams {
    int kernel_size = 5;   // odd, >= 3
    int outer_iters = 8;   // F/h alternations
    double noise_level = 0.02;  // ridge weight for the kernel seed fit, relative to its Gram diagonal
    double lambda1 = 0.02;      // image-gradient prior weight
    double lambda2 = 0.1;       // kernel sparsity weight
    // Piecewise gradient prior: linear up to the knee l_t, then a nearly
    // flat quadratic. Gradients are measured in gray levels (0..255), the
    // scale these constants were published for. theta3 is pinned by
    // continuity at the knee; change l_t or the thetas together.
    double theta1 = 2.7;
    double theta2 = 6.1e-4;
    double l_t = 1.8526;
    double theta3 = theta1 * l_t - theta2 * l_t * l_t;
    // Solver internals. The F-step is half-quadratic splitting; stages are
    // parameterized by the gradient threshold they apply (gray levels),
    // decaying geometrically, so the coupling weight scales with lambda1.
    // Each stage solves its linear system by conjugate gradients with the
    // exact operator adjoints.
    int hq_stages = 5;
    double hq_tau0 = 2.0;
    double hq_tau_decay = 0.4;
    int cg_iters = 50;
    double cg_tol = 1e-6;
    int h_iters = 300;          // coordinate-descent sweep cap per kernel fit
    double divergence_tol = 1e-6;  // relative objective increase that stops the run
};

struct BlurKernel {
    int size = 0;
    std::vector<double> weights;  // row-major size x size

    BlurKernel() = default;
    explicit BlurKernel(int s) : size(s), weights(static_cast<std::size_t>(s) * s, 0.0) {}
    double& at(int i, int j) { return weights[static_cast<std::size_t>(j) * size + i]; }
    double at(int i, int j) const { return weights[static_cast<std::size_t>(j) * size + i]; }
    double sum() const;
};

BlurKernel delta_kernel(int size);

// Peak-normalized image of the kernel for PGM/PNG dumps.
ImageGrid kernel_image(const BlurKernel& kernel);

// out(p) = sum_k kernel(k) * image(clamp(p + k - center)), replicate borders.
ImageGrid convolve_replicate(const ImageGrid& image, const BlurKernel& kernel);

// Negative log-prior of an image gradient (gray-level units): -theta1*|x|
// inside the knee, -(theta2*x^2 + theta3) outside. Continuous at +-l_t.
double rho_prior(double x, const DeblurParams& params);

struct DeblurResult {
    ImageGrid image;      // clamped to [0,1]
    BlurKernel kernel;
    // Objective after initialization and after every accepted step.
    std::vector<double> objective_trace;
    bool diverged = false;
    int outer_completed = 0;
};

// Blind deconvolution: minimizes |h*F - G|^2 + lambda1*sum(phi(Fx)+phi(Fy))
// + lambda2*|h|_1 with phi = -rho_prior, alternating an h-step (nonnegative
// L1-regularized least squares by exact coordinate descent, normalized to
// the simplex) and an F-step (half-quadratic). The kernel is seeded by a
// least-squares fit of salient shock-filtered edges against the input;
// comparing seeds by objective would always keep the no-blur answer. Steps
// that raise the objective beyond divergence_tol stop the run: the flag is
// set and the last accepted state is returned, so the trace is
// non-increasing.
DeblurResult blind_deconvolve(const ImageGrid& observed, const DeblurParams& params = {});

} // namespace turbi
