#pragma once

#include <complex>
#include <vector>

#include "turbi/image.hpp"

namespace turbi {

// Per-pixel Beltrami coefficient mu = f_zbar / f_z of the map
// f(p) = p + field(p), viewed as a complex-valued function.
struct BeltramiField {
    int width = 0;
    int height = 0;
    std::vector<std::complex<double>> mu;

    BeltramiField() = default;
    BeltramiField(int w, int h)
        : width(w), height(h), mu(static_cast<std::size_t>(w) * h) {}

    std::complex<double>& at(int x, int y) { return mu[static_cast<std::size_t>(y) * width + x]; }
    std::complex<double> at(int x, int y) const { return mu[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return mu.size(); }

    double sup_magnitude() const;
};

// Wirtinger derivatives by central differences with replicate borders.
// Pixels where |f_z| underflows get mu = 0.
BeltramiField beltrami_from_field(const VectorField& field);

// mu -> mu / (|mu| + eps) wherever |mu| >= 1; argument preserved, output
// magnitude strictly below 1. Idempotent. eps must be positive.
BeltramiField clamp_beltrami(const BeltramiField& mu, double eps = 0.01);

struct LbsParams {
    double tol = 1e-10;      // relative residual target for the CG solve
    int max_iter_per_side = 10; // iteration cap = this * max(width, height)
};

struct LbsResult {
    VectorField field;       // displacement of the reconstructed map
    int iterations_u = 0;
    int iterations_v = 0;
    double residual_u = 0.0; // relative residuals reached
    double residual_v = 0.0;
    bool converged = false;
};

// Reconstructs the map with the prescribed Beltrami coefficient by solving
// the pair of elliptic equations div(A(mu) grad u) = 0, div(A(mu) grad v) = 0
// with Dirichlet data on the image border. boundary == nullptr means
// identity boundary (zero displacement on the frame). Requires
// sup |mu| < 1; the assembled system is symmetric positive definite and is
// solved with Jacobi-preconditioned conjugate gradients.
LbsResult lbs_solve(const BeltramiField& mu, const VectorField* boundary = nullptr,
                    const LbsParams& params = {});

// Smallest discrete Jacobian determinant of p + field(p) over interior
// pixels (central differences). Positive everywhere means fold-free.
double min_interior_jacobian(const VectorField& field);

} // namespace turbi
