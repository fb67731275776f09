#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "turbi/common.hpp"
#include "turbi/rpca.hpp"

using namespace turbi;

namespace {

// Rank-r product of seeded Gaussian factors.
Matrix low_rank(int m, int n, int r, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix A(m, r), B(r, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < r; ++j) A(i, j) = rng.normal();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
    return scale * A * B;
}

// Sparse +-amplitude spikes on a given fraction of entries.
Matrix spikes(int m, int n, double fraction, double amplitude, std::uint64_t seed) {
    Rng rng(seed);
    Matrix S = Matrix::Zero(m, n);
    auto total = static_cast<std::uint64_t>(m) * n;
    auto want = static_cast<std::uint64_t>(fraction * total);
    for (std::uint64_t k = 0; k < want; ++k) {
        auto idx = rng.uniform_index(total);
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        S(static_cast<int>(idx % m), static_cast<int>(idx / m)) = sign * amplitude;
    }
    return S;
}

} // namespace

TEST_CASE("zero matrix splits into zeros after a single iteration") {
    Matrix R = Matrix::Zero(8, 5);
    RpcaResult res = rpca(R);
    CHECK(res.converged);
    CHECK(res.outer_iterations == 1);
    CHECK(res.L.norm() == 0.0);
    CHECK(res.S.norm() == 0.0);
}

TEST_CASE("rank-1 matrix is recovered as low-rank with negligible sparse part") {
    Matrix R = low_rank(60, 40, 1, 42);
    RpcaResult res = rpca(R);
    CHECK(res.converged);
    CHECK((res.L - R).norm() / R.norm() < 1e-6);
    CHECK(res.S.cwiseAbs().sum() / R.cwiseAbs().sum() < 1e-4);
}

TEST_CASE("exact recovery of rank-2 plus 5 percent spikes under 5 seconds") {
    Matrix L0 = low_rank(200, 50, 2, 7);
    Matrix S0 = spikes(200, 50, 0.05, 1.0, 8);
    Matrix R = L0 + S0;
    auto t0 = std::chrono::steady_clock::now();
    RpcaResult res = rpca(R);
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(res.converged);
    CHECK((res.L - L0).norm() / L0.norm() < 1e-4);
    CHECK((res.S - S0).norm() / std::max(1.0, S0.norm()) < 1e-4);
    CHECK(dt < 5.0);
}

TEST_CASE("reconstruction identity holds at convergence") {
    Matrix R = low_rank(80, 30, 3, 11) + spikes(80, 30, 0.08, 2.0, 12);
    RpcaResult res = rpca(R);
    CHECK(res.converged);
    CHECK((res.L + res.S - R).norm() / R.norm() <= 1e-7);
    CHECK(res.residual <= 1e-7);
}

TEST_CASE("huge lambda forces everything into the low-rank part") {
    Matrix R = low_rank(40, 20, 2, 3) + spikes(40, 20, 0.05, 1.0, 4);
    RpcaParams p;
    p.lambda = 1e6;
    RpcaResult res = rpca(R, p);
    CHECK(res.converged);
    CHECK(res.S.cwiseAbs().maxCoeff() < 1e-6);
    CHECK((res.L - R).norm() / R.norm() < 1e-6);
}

TEST_CASE("non-finite input is rejected") {
    Matrix R = Matrix::Zero(4, 4);
    R(1, 2) = std::nan("");
    CHECK_THROWS_AS(rpca(R), std::invalid_argument);
}

TEST_CASE("nonzero_density counts thresholded entries") {
    Matrix S = Matrix::Zero(10, 10);
    for (int i = 0; i < 7; ++i) S(i, i) = 0.5;
    CHECK(nonzero_density(S) == doctest::Approx(0.07));
    CHECK(nonzero_density(S, 0.6) == doctest::Approx(0.0));
}

TEST_CASE("randomized branch matches full SVD recovery on a larger problem") {
    // min(m, n) above the limit forces the randomized range finder.
    Matrix L0 = low_rank(560, 530, 3, 21, 0.5);
    Matrix S0 = spikes(560, 530, 0.02, 3.0, 22);
    Matrix R = L0 + S0;
    RpcaParams p;
    p.tol = 1e-6;
    REQUIRE(std::min(R.rows(), R.cols()) > p.full_svd_limit);
    RpcaResult res = rpca(R, p);
    CHECK(res.converged);
    CHECK((res.L - L0).norm() / L0.norm() < 1e-3);
}
