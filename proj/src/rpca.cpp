#include "turbi/rpca.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "turbi/common.hpp"

namespace turbi {

namespace {

double soft(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Spectral norm by power iteration (used for mu0 and for the randomized
// branch, where a full SVD would defeat the point).
double spectral_norm(const Matrix& A) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(A.cols());
    v.normalize();
    double s = 0.0;
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd u = A * v;
        double n = u.norm();
        if (n == 0.0) return 0.0;
        u /= n;
        v = A.transpose() * u;
        double s2 = v.norm();
        if (s2 == 0.0) return 0.0;
        v /= s2;
        if (std::fabs(s2 - s) <= 1e-12 * s2) { s = s2; break; }
        s = s2;
    }
    return s;
}

struct Svd {
    Matrix U;
    Eigen::VectorXd sv;
    Matrix V;
};

Svd full_svd(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd;
    if (std::min(A.rows(), A.cols()) > 16) {
        Eigen::BDCSVD<Matrix> bdc(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        return {bdc.matrixU(), bdc.singularValues(), bdc.matrixV()};
    }
    svd.compute(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

// Randomized SVD good enough for singular-value thresholding: the sketch
// rank grows until the smallest captured singular value drops below the
// shrinkage threshold, so every value that survives shrinkage is present.
Svd randomized_svd_above(const Matrix& A, double threshold, Rng& rng) {
    const int mindim = static_cast<int>(std::min(A.rows(), A.cols()));
    int rank = std::min(32, mindim);
    for (;;) {
        int sketch = std::min(mindim, rank + 8);
        Matrix Omega(A.cols(), sketch);
        for (int j = 0; j < sketch; ++j)
            for (int i = 0; i < Omega.rows(); ++i)
                Omega(i, j) = rng.normal();
        Matrix Y = A * Omega;
        Eigen::HouseholderQR<Matrix> qr(Y);
        Matrix Q = qr.householderQ() * Matrix::Identity(Y.rows(), sketch);
        // Two power iterations tighten the subspace.
        for (int p = 0; p < 2; ++p) {
            Matrix Z = A.transpose() * Q;
            Eigen::HouseholderQR<Matrix> qz(Z);
            Matrix Qz = qz.householderQ() * Matrix::Identity(Z.rows(), sketch);
            Matrix Y2 = A * Qz;
            Eigen::HouseholderQR<Matrix> qy(Y2);
            Q = qy.householderQ() * Matrix::Identity(Y2.rows(), sketch);
        }
        Matrix B = Q.transpose() * A;
        Svd small = full_svd(B);
        if (small.sv.size() == 0) return small;
        bool captured_all = sketch >= mindim || small.sv(small.sv.size() - 1) < threshold;
        if (captured_all) {
            return {Q * small.U, small.sv, small.V};
        }
        rank = std::min(mindim, rank * 2);
    }
}

} // namespace

double nonzero_density(const Matrix& S, double threshold) {
    if (S.size() == 0) return 0.0;
    std::ptrdiff_t count = 0;
    for (std::ptrdiff_t i = 0; i < S.size(); ++i)
        if (std::fabs(S.data()[i]) > threshold) ++count;
    return static_cast<double>(count) / static_cast<double>(S.size());
}

RpcaResult rpca(const Matrix& R, const RpcaParams& params) {
    if (R.rows() == 0 || R.cols() == 0) throw std::invalid_argument("rpca: empty matrix");
    if (!R.allFinite()) throw std::invalid_argument("rpca: non-finite input");

    const auto m = R.rows(), n = R.cols();
    const double lambda = params.lambda > 0.0
                              ? params.lambda
                              : 1.0 / std::sqrt(static_cast<double>(std::max(m, n)));
    const double fro_R = R.norm();

    RpcaResult res;
    res.L = Matrix::Zero(m, n);
    res.S = Matrix::Zero(m, n);
    if (fro_R == 0.0) {
        res.outer_iterations = 1;
        res.residual = 0.0;
        res.converged = true;
        return res;
    }

    const bool use_full = std::min(m, n) <= params.full_svd_limit;
    Rng sketch_rng(fnv1a64("rpca-sketch"));

    // Dual ascent initialization from the sign matrix, as in the exact ALM
    // scheme: Y0 = sgn(R) / max(||sgn||_2, ||sgn||_inf / lambda).
    Matrix sgn = R.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    double norm2 = use_full ? full_svd(sgn).sv(0) : spectral_norm(sgn);
    double norminf = sgn.cwiseAbs().maxCoeff() / lambda;
    Matrix Y = sgn / std::max(norm2, norminf);

    double normR2 = use_full ? full_svd(R).sv(0) : spectral_norm(R);
    double mu = params.mu0_scale / std::max(normR2, 1e-300);

    Matrix& L = res.L;
    Matrix& S = res.S;
    for (int outer = 0; outer < params.max_outer; ++outer) {
        res.outer_iterations = outer + 1;
        // Inner alternation at fixed mu.
        for (int inner = 0; inner < params.max_inner; ++inner) {
            Matrix GL = R - S + Y / mu;
            Svd svd = use_full ? full_svd(GL) : randomized_svd_above(GL, 1.0 / mu, sketch_rng);
            Eigen::VectorXd sv = svd.sv;
            int keep = 0;
            for (int i = 0; i < sv.size(); ++i)
                if (sv(i) > 1.0 / mu) ++keep;
            Matrix Lnew;
            if (keep == 0) {
                Lnew = Matrix::Zero(m, n);
            } else {
                Eigen::VectorXd shr = sv.head(keep).array() - 1.0 / mu;
                Lnew = svd.U.leftCols(keep) * shr.asDiagonal() * svd.V.leftCols(keep).transpose();
            }
            Matrix GS = R - Lnew + Y / mu;
            Matrix Snew = GS.unaryExpr([t = lambda / mu](double v) { return soft(v, t); });
            double dL = (Lnew - L).norm() / fro_R;
            double dS = (Snew - S).norm() / fro_R;
            L.swap(Lnew);
            S.swap(Snew);
            if (dL < params.tol && dS < params.tol) break;
        }
        Matrix Z = R - L - S;
        res.residual = Z.norm() / fro_R;
        if (res.residual < params.tol) {
            res.converged = true;
            break;
        }
        Y += mu * Z;
        mu *= params.rho_mu;
    }
    return res;
}

} // namespace turbi
