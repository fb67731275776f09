#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace turbi {

using Matrix = Eigen::MatrixXd;

// Robust principal component analysis, exact augmented Lagrangian method:
//   min ||L||_* + lambda ||S||_1   subject to   L + S = R.
struct RpcaParams {
    double lambda = 0.0;        // <= 0 picks 1/sqrt(max(m, n))
    double tol = 1e-7;          // relative Frobenius residual ||R-L-S|| / ||R||
    int max_outer = 500;
    int max_inner = 20;
    double mu0_scale = 1.25;    // mu0 = mu0_scale / ||R||_2
    double rho_mu = 1.6;        // mu growth per outer iteration
    // Full SVD is used while min(m, n) <= this; larger problems go through a
    // randomized range finder.
    int full_svd_limit = 512;
};

struct RpcaResult {
    Matrix L;
    Matrix S;
    int outer_iterations = 0;
    double residual = 0.0;      // final relative residual
    bool converged = false;
};

RpcaResult rpca(const Matrix& R, const RpcaParams& params = {});

// Fraction of entries with |x| > threshold.
double nonzero_density(const Matrix& S, double threshold = 1e-6);

} // namespace turbi
