#include "turbi/quasiconformal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace turbi {

double BeltramiField::sup_magnitude() const {
    double m = 0.0;
    for (const auto& v : mu) m = std::max(m, std::abs(v));
    return m;
}

BeltramiField beltrami_from_field(const VectorField& field) {
    const int w = field.width, h = field.height;
    if (w < 3 || h < 3) throw std::invalid_argument("beltrami_from_field: grid too small");
    BeltramiField out(w, h);
    auto fx_at = [&](int x, int y) { return x + field.dx[static_cast<std::size_t>(y) * w + x]; };
    auto fy_at = [&](int x, int y) { return y + field.dy[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < h; ++y) {
        int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        double wy = yd - yu > 0 ? 1.0 / (yd - yu) : 1.0;
        for (int x = 0; x < w; ++x) {
            int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            double wx = xr - xl > 0 ? 1.0 / (xr - xl) : 1.0;
            // f = u + i v; partial derivatives of both components.
            double ux = (fx_at(xr, y) - fx_at(xl, y)) * wx;
            double vx = (fy_at(xr, y) - fy_at(xl, y)) * wx;
            double uy = (fx_at(x, yd) - fx_at(x, yu)) * wy;
            double vy = (fy_at(x, yd) - fy_at(x, yu)) * wy;
            // f_z = (f_x - i f_y) / 2, f_zbar = (f_x + i f_y) / 2.
            std::complex<double> fzb(0.5 * (ux - vy), 0.5 * (vx + uy));
            std::complex<double> fz(0.5 * (ux + vy), 0.5 * (vx - uy));
            out.at(x, y) = std::abs(fz) < 1e-12 ? std::complex<double>(0.0, 0.0) : fzb / fz;
        }
    }
    return out;
}

BeltramiField clamp_beltrami(const BeltramiField& mu, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("clamp_beltrami: eps must be positive");
    BeltramiField out = mu;
    for (auto& v : out.mu) {
        double m = std::abs(v);
        if (m >= 1.0) v *= 1.0 / (m + eps);
    }
    return out;
}

namespace {

// Diffusion coefficients of the elliptic reformulation for mu = rho + i tau:
//   A = [a1 a2; a2 a3],
//   a1 = ((rho-1)^2 + tau^2) / d,  a2 = -2 tau / d,
//   a3 = ((rho+1)^2 + tau^2) / d,  d = 1 - rho^2 - tau^2.
struct Coeff {
    double a1, a2, a3;
};

Coeff coeff_from_mu(std::complex<double> mu) {
    double rho = mu.real(), tau = mu.imag();
    double d = 1.0 - rho * rho - tau * tau;
    Coeff c;
    c.a1 = ((rho - 1.0) * (rho - 1.0) + tau * tau) / d;
    c.a2 = -2.0 * tau / d;
    c.a3 = ((rho + 1.0) * (rho + 1.0) + tau * tau) / d;
    return c;
}

// One scalar elliptic solve on the pixel grid with bilinear elements over
// the cells between pixels; cell coefficients are the average of the four
// corner pixels. The 2x2 Gauss rule integrates the bilinear gradient
// products exactly. Boundary pixels carry Dirichlet data.
class ScalarLbs {
public:
    ScalarLbs(const BeltramiField& mu) : w_(mu.width), h_(mu.height) {
        stencil_.assign(static_cast<std::size_t>(w_) * h_ * 9, 0.0);
        const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
        for (int cy = 0; cy + 1 < h_; ++cy) {
            for (int cx = 0; cx + 1 < w_; ++cx) {
                Coeff c00 = coeff_from_mu(mu.at(cx, cy));
                Coeff c10 = coeff_from_mu(mu.at(cx + 1, cy));
                Coeff c01 = coeff_from_mu(mu.at(cx, cy + 1));
                Coeff c11 = coeff_from_mu(mu.at(cx + 1, cy + 1));
                Coeff c{0.25 * (c00.a1 + c10.a1 + c01.a1 + c11.a1),
                        0.25 * (c00.a2 + c10.a2 + c01.a2 + c11.a2),
                        0.25 * (c00.a3 + c10.a3 + c01.a3 + c11.a3)};
                if (!(c.a1 > 0.0) || !(c.a3 > 0.0) || !(c.a1 * c.a3 - c.a2 * c.a2 > 0.0))
                    throw std::runtime_error("lbs_solve: coefficient matrix not positive definite");

                // Element stiffness K_ij = sum_gauss grad(Ni)^T A grad(Nj) / 4.
                double K[4][4] = {};
                for (double gx : gp) {
                    for (double gy : gp) {
                        // Node order: (0,0) (1,0) (0,1) (1,1) within the cell.
                        double dNdx[4] = {-(1.0 - gy), (1.0 - gy), -gy, gy};
                        double dNdy[4] = {-(1.0 - gx), -gx, (1.0 - gx), gx};
                        for (int i = 0; i < 4; ++i) {
                            double ax = c.a1 * dNdx[i] + c.a2 * dNdy[i];
                            double ay = c.a2 * dNdx[i] + c.a3 * dNdy[i];
                            for (int j = 0; j < 4; ++j)
                                K[i][j] += 0.25 * (ax * dNdx[j] + ay * dNdy[j]);
                        }
                    }
                }
                const int nx[4] = {cx, cx + 1, cx, cx + 1};
                const int ny[4] = {cy, cy, cy + 1, cy + 1};
                for (int i = 0; i < 4; ++i) {
                    for (int j = 0; j < 4; ++j) {
                        int ddx = nx[j] - nx[i] + 1; // 0..2
                        int ddy = ny[j] - ny[i] + 1;
                        stencil_at(nx[i], ny[i], ddx, ddy) += K[i][j];
                    }
                }
            }
        }
    }

    // y = K x over the full grid.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        for (int py = 0; py < h_; ++py) {
            for (int px = 0; px < w_; ++px) {
                double acc = 0.0;
                const double* st = &stencil_[(static_cast<std::size_t>(py) * w_ + px) * 9];
                for (int dy = -1; dy <= 1; ++dy) {
                    int qy = py + dy;
                    if (qy < 0 || qy >= h_) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        int qx = px + dx;
                        if (qx < 0 || qx >= w_) continue;
                        acc += st[(dy + 1) * 3 + (dx + 1)] * x[static_cast<std::size_t>(qy) * w_ + qx];
                    }
                }
                y[static_cast<std::size_t>(py) * w_ + px] = acc;
            }
        }
    }

    bool is_border(int x, int y) const { return x == 0 || y == 0 || x == w_ - 1 || y == h_ - 1; }

    // Solves for the displacement du (interior unknowns) given the full
    // coordinate grid `base` (u = base + du) and Dirichlet displacement on
    // the border already written into du. Returns {iterations, residual}.
    std::pair<int, double> solve(const std::vector<double>& base, std::vector<double>& du,
                                 const LbsParams& params) const {
        const std::size_t n = base.size();
        std::vector<double> rhs(n, 0.0), tmp(n, 0.0);
        // K (base + du) = 0  =>  K du = -K base, with border du fixed.
        apply(base, rhs);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = -rhs[i];
        std::vector<double> bdry(n, 0.0);
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x)
                if (is_border(x, y)) bdry[idx(x, y)] = du[idx(x, y)];
        apply(bdry, tmp);
        for (std::size_t i = 0; i < n; ++i) rhs[i] -= tmp[i];

        std::vector<char> interior(n, 0);
        double rhs_norm2 = 0.0;
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x)
                if (!is_border(x, y)) {
                    interior[idx(x, y)] = 1;
                    rhs_norm2 += rhs[idx(x, y)] * rhs[idx(x, y)];
                }
        if (rhs_norm2 == 0.0) {
            for (std::size_t i = 0; i < n; ++i)
                if (interior[i]) du[i] = 0.0;
            return {0, 0.0};
        }

        std::vector<double> diag(n, 1.0);
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x)
                if (interior[idx(x, y)])
                    diag[idx(x, y)] = stencil_[(idx(x, y)) * 9 + 4];

        // Jacobi-preconditioned CG on the interior block; du border stays 0
        // inside the Krylov vectors.
        std::vector<double> xv(n, 0.0), r(n, 0.0), z(n, 0.0), p(n, 0.0), Ap(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) r[i] = interior[i] ? rhs[i] : 0.0;
        double rz = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (interior[i]) {
                z[i] = r[i] / diag[i];
                rz += r[i] * z[i];
            }
        p = z;
        const int max_iter = params.max_iter_per_side * std::max(w_, h_);
        int it = 0;
        double rel = 1.0;
        for (; it < max_iter; ++it) {
            apply(p, Ap);
            double pAp = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (interior[i]) pAp += p[i] * Ap[i];
            if (pAp <= 0.0) break; // SPD violated numerically; bail with best iterate
            double alpha = rz / pAp;
            double r2 = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (interior[i]) {
                    xv[i] += alpha * p[i];
                    r[i] -= alpha * Ap[i];
                    r2 += r[i] * r[i];
                }
            rel = std::sqrt(r2 / rhs_norm2);
            if (rel < params.tol) { ++it; break; }
            double rz_new = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (interior[i]) {
                    z[i] = r[i] / diag[i];
                    rz_new += r[i] * z[i];
                }
            double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t i = 0; i < n; ++i)
                p[i] = interior[i] ? z[i] + beta * p[i] : 0.0;
        }
        for (std::size_t i = 0; i < n; ++i)
            if (interior[i]) du[i] = xv[i];
        return {it, rel};
    }

private:
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w_ + x; }
    double& stencil_at(int x, int y, int ddx, int ddy) {
        return stencil_[(static_cast<std::size_t>(y) * w_ + x) * 9 + ddy * 3 + ddx];
    }

    int w_, h_;
    std::vector<double> stencil_;
};

} // namespace

LbsResult lbs_solve(const BeltramiField& mu, const VectorField* boundary, const LbsParams& params) {
    const int w = mu.width, h = mu.height;
    if (w < 3 || h < 3) throw std::invalid_argument("lbs_solve: grid too small");
    if (boundary && (boundary->width != w || boundary->height != h))
        throw std::invalid_argument("lbs_solve: boundary dimension mismatch");
    if (mu.sup_magnitude() >= 1.0)
        throw std::invalid_argument("lbs_solve: sup |mu| must be below 1");

    ScalarLbs solver(mu);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<double> base_x(n), base_y(n), du(n, 0.0), dv(n, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            base_x[static_cast<std::size_t>(y) * w + x] = x;
            base_y[static_cast<std::size_t>(y) * w + x] = y;
        }
    if (boundary) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (solver.is_border(x, y)) {
                    du[static_cast<std::size_t>(y) * w + x] = boundary->dx[static_cast<std::size_t>(y) * w + x];
                    dv[static_cast<std::size_t>(y) * w + x] = boundary->dy[static_cast<std::size_t>(y) * w + x];
                }
    }

    LbsResult res;
    auto [itu, ru] = solver.solve(base_x, du, params);
    auto [itv, rv] = solver.solve(base_y, dv, params);
    res.iterations_u = itu;
    res.iterations_v = itv;
    res.residual_u = ru;
    res.residual_v = rv;
    res.converged = ru < params.tol && rv < params.tol;
    res.field = VectorField(w, h);
    res.field.dx = std::move(du);
    res.field.dy = std::move(dv);
    return res;
}

double min_interior_jacobian(const VectorField& field) {
    const int w = field.width, h = field.height;
    if (w < 3 || h < 3) throw std::invalid_argument("min_interior_jacobian: grid too small");
    double mn = std::numeric_limits<double>::infinity();
    auto ix = [&](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            double uxx = 1.0 + 0.5 * (field.dx[ix(x + 1, y)] - field.dx[ix(x - 1, y)]);
            double uxy = 0.5 * (field.dx[ix(x, y + 1)] - field.dx[ix(x, y - 1)]);
            double uyx = 0.5 * (field.dy[ix(x + 1, y)] - field.dy[ix(x - 1, y)]);
            double uyy = 1.0 + 0.5 * (field.dy[ix(x, y + 1)] - field.dy[ix(x, y - 1)]);
            mn = std::min(mn, uxx * uyy - uxy * uyx);
        }
    }
    return mn;
}

} // namespace turbi
