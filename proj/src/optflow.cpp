#include "turbi/optflow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace turbi {

namespace {

// Intensity residuals are measured in gray levels (0..255) while fields are
// in pixels; the default alpha and gamma weights balance the terms on that
// scale. A [0,1]-scaled data term would be two orders of magnitude too weak
// against the smoothness term to move the solver.
constexpr double GRAY_SCALE = 255.0;

constexpr double PSI_EPS = 1e-6;

double psi(double s2) { return std::sqrt(s2 + PSI_EPS); }
double psi_deriv(double s2) { return 0.5 / std::sqrt(s2 + PSI_EPS); }

struct Level {
    int w, h;
};

// Geometric pyramid; level 0 is full resolution.
std::vector<Level> plan_pyramid(int w, int h, const FlowParams& p) {
    std::vector<Level> levels;
    levels.push_back({w, h});
    double fw = w, fh = h;
    while (true) {
        fw *= p.pyramid_factor;
        fh *= p.pyramid_factor;
        int nw = static_cast<int>(std::lround(fw));
        int nh = static_cast<int>(std::lround(fh));
        if (std::min(nw, nh) < 16) break;
        levels.push_back({nw, nh});
        if (p.levels > 0 && static_cast<int>(levels.size()) == p.levels) break;
    }
    if (p.levels > 0) {
        if (static_cast<int>(levels.size()) < p.levels)
            throw std::invalid_argument("flow: image too small for requested pyramid depth");
        levels.resize(p.levels);
    }
    return levels;
}

ImageGrid downsample_to(const ImageGrid& img, int nw, int nh) {
    double factor = 0.5 * (static_cast<double>(nw) / img.width + static_cast<double>(nh) / img.height);
    // Presmooth against aliasing before decimation.
    double sigma = 0.5 * std::sqrt(std::max(0.0, 1.0 / (factor * factor) - 1.0));
    ImageGrid smoothed = sigma > 0.1 ? gaussian_blur(img, sigma) : img;
    return resize_bilinear(smoothed, nw, nh);
}

// Solves the linearized system for the flow increment (du, dv) at one warp
// iteration with successive over-relaxation. All arrays are w*h, row-major.
struct LevelSolver {
    int w, h;
    const FlowParams& p;
    // Data, gradient-constancy and smoothness fixed quantities for this warp.
    std::vector<double> Ix, Iy, It, Ixx, Ixy, Iyy, Ixt, Iyt;
    std::vector<char> valid; // 0 where the warp sampled outside the image

    LevelSolver(int w_, int h_, const FlowParams& p_) : w(w_), h(h_), p(p_) {
        std::size_t n = static_cast<std::size_t>(w) * h;
        Ix.resize(n); Iy.resize(n); It.resize(n);
        Ixx.resize(n); Ixy.resize(n); Iyy.resize(n);
        Ixt.resize(n); Iyt.resize(n);
        valid.resize(n);
    }

    void run(const std::vector<double>& u, const std::vector<double>& v,
             std::vector<double>& du, std::vector<double>& dv) const {
        const std::size_t n = static_cast<std::size_t>(w) * h;
        std::vector<double> auu(n), auv(n), avv(n), bu(n), bv(n), wsm(n);
        std::fill(du.begin(), du.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);

        for (int inner = 0; inner < p.inner_iters; ++inner) {
            // Lagged robust weights, then per-pixel 2x2 system coefficients.
            for (std::size_t i = 0; i < n; ++i) {
                double rb = It[i] + Ix[i] * du[i] + Iy[i] * dv[i];
                double rgx = Ixt[i] + Ixx[i] * du[i] + Ixy[i] * dv[i];
                double rgy = Iyt[i] + Ixy[i] * du[i] + Iyy[i] * dv[i];
                double wd = valid[i] ? psi_deriv(rb * rb) : 0.0;
                double wg = valid[i] ? p.gamma * psi_deriv(rgx * rgx + rgy * rgy) : 0.0;
                auu[i] = wd * Ix[i] * Ix[i] + wg * (Ixx[i] * Ixx[i] + Ixy[i] * Ixy[i]);
                auv[i] = wd * Ix[i] * Iy[i] + wg * (Ixx[i] * Ixy[i] + Ixy[i] * Iyy[i]);
                avv[i] = wd * Iy[i] * Iy[i] + wg * (Ixy[i] * Ixy[i] + Iyy[i] * Iyy[i]);
                bu[i] = -(wd * Ix[i] * It[i] + wg * (Ixx[i] * Ixt[i] + Ixy[i] * Iyt[i]));
                bv[i] = -(wd * Iy[i] * It[i] + wg * (Ixy[i] * Ixt[i] + Iyy[i] * Iyt[i]));
            }
            // Smoothness weights on the total field u+du.
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    std::size_t i = idx(x, y);
                    double gx_u = half_grad_x(u, du, x, y);
                    double gy_u = half_grad_y(u, du, x, y);
                    double gx_v = half_grad_x(v, dv, x, y);
                    double gy_v = half_grad_y(v, dv, x, y);
                    wsm[i] = psi_deriv(gx_u * gx_u + gy_u * gy_u + gx_v * gx_v + gy_v * gy_v);
                }
            }
            // SOR sweeps on the coupled (du, dv) system.
            for (int sweep = 0; sweep < p.sor_iters; ++sweep) {
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        std::size_t i = idx(x, y);
                        double sw = 0.0, su = 0.0, sv = 0.0;
                        auto acc = [&](int qx, int qy) {
                            std::size_t j = idx(qx, qy);
                            double wgt = 0.5 * (wsm[i] + wsm[j]);
                            sw += wgt;
                            su += wgt * (u[j] + du[j] - u[i]);
                            sv += wgt * (v[j] + dv[j] - v[i]);
                        };
                        if (x > 0) acc(x - 1, y);
                        if (x + 1 < w) acc(x + 1, y);
                        if (y > 0) acc(x, y - 1);
                        if (y + 1 < h) acc(x, y + 1);
                        double denom_u = auu[i] + p.alpha * sw;
                        double denom_v = avv[i] + p.alpha * sw;
                        double nu = (bu[i] - auv[i] * dv[i] + p.alpha * su) / denom_u;
                        du[i] += p.sor_omega * (nu - du[i]);
                        double nv = (bv[i] - auv[i] * du[i] + p.alpha * sv) / denom_v;
                        dv[i] += p.sor_omega * (nv - dv[i]);
                    }
                }
            }
        }
    }

    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }

    double half_grad_x(const std::vector<double>& base, const std::vector<double>& inc, int x, int y) const {
        int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
        double s = xr - xl > 0 ? 1.0 / (xr - xl) : 1.0;
        return ((base[idx(xr, y)] + inc[idx(xr, y)]) - (base[idx(xl, y)] + inc[idx(xl, y)])) * s;
    }
    double half_grad_y(const std::vector<double>& base, const std::vector<double>& inc, int x, int y) const {
        int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        double s = yd - yu > 0 ? 1.0 / (yd - yu) : 1.0;
        return ((base[idx(x, yd)] + inc[idx(x, yd)]) - (base[idx(x, yu)] + inc[idx(x, yu)])) * s;
    }
};

} // namespace

VectorField flow(const ImageGrid& from, const ImageGrid& to, const FlowParams& params) {
    if (!from.same_size(to)) throw std::invalid_argument("flow: dimension mismatch");
    if (std::min(from.width, from.height) < 16)
        throw std::invalid_argument("flow: needs both sides >= 16");

    // Brightness constancy in solver form: I1 is the stationary template
    // (`to`), I2 is sampled at x + w (`from`), so warp(from, w) matches `to`.
    ImageGrid I1_full = to;
    ImageGrid I2_full = from;
    for (auto& v : I1_full.data) v *= GRAY_SCALE;
    for (auto& v : I2_full.data) v *= GRAY_SCALE;

    std::vector<Level> levels = plan_pyramid(from.width, from.height, params);
    std::vector<double> u, v;

    for (int li = static_cast<int>(levels.size()) - 1; li >= 0; --li) {
        const Level L = levels[li];
        ImageGrid I1 = (L.w == I1_full.width && L.h == I1_full.height)
                           ? I1_full
                           : downsample_to(I1_full, L.w, L.h);
        ImageGrid I2 = (L.w == I2_full.width && L.h == I2_full.height)
                           ? I2_full
                           : downsample_to(I2_full, L.w, L.h);
        const std::size_t n = static_cast<std::size_t>(L.w) * L.h;

        if (u.empty()) {
            u.assign(n, 0.0);
            v.assign(n, 0.0);
        } else {
            const Level Lc = levels[li + 1];
            ImageGrid cu(Lc.w, Lc.h), cv(Lc.w, Lc.h);
            cu.data = u;
            cv.data = v;
            ImageGrid fu = resize_bilinear(cu, L.w, L.h);
            ImageGrid fv = resize_bilinear(cv, L.w, L.h);
            double sx = static_cast<double>(L.w) / Lc.w;
            double sy = static_cast<double>(L.h) / Lc.h;
            u.assign(n, 0.0);
            v.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                u[i] = fu.data[i] * sx;
                v[i] = fv.data[i] * sy;
            }
        }

        ImageGrid I2x = derivative_x(I2), I2y = derivative_y(I2);
        ImageGrid I1x = derivative_x(I1), I1y = derivative_y(I1);
        LevelSolver solver(L.w, L.h, params);
        std::vector<double> du(n, 0.0), dv(n, 0.0);

        for (int outer = 0; outer < params.outer_iters; ++outer) {
            // Warp image and gradients of I2 by the current field.
            std::size_t i = 0;
            for (int y = 0; y < L.h; ++y) {
                for (int x = 0; x < L.w; ++x, ++i) {
                    double xs = x + u[i], ys = y + v[i];
                    bool inside = xs >= 0.0 && xs <= L.w - 1.0 && ys >= 0.0 && ys <= L.h - 1.0;
                    solver.valid[i] = inside ? 1 : 0;
                    double w2 = sample_bilinear(I2, xs, ys);
                    double w2x = sample_bilinear(I2x, xs, ys);
                    double w2y = sample_bilinear(I2y, xs, ys);
                    // Derivatives averaged between the frames.
                    solver.Ix[i] = 0.5 * (w2x + I1x.data[i]);
                    solver.Iy[i] = 0.5 * (w2y + I1y.data[i]);
                    solver.It[i] = w2 - I1.data[i];
                    solver.Ixt[i] = w2x - I1x.data[i];
                    solver.Iyt[i] = w2y - I1y.data[i];
                }
            }
            // Second-order terms from the averaged first derivatives.
            {
                ImageGrid gx(L.w, L.h), gy(L.w, L.h);
                gx.data.assign(solver.Ix.begin(), solver.Ix.end());
                gy.data.assign(solver.Iy.begin(), solver.Iy.end());
                ImageGrid gxx = derivative_x(gx), gxy = derivative_y(gx), gyy = derivative_y(gy);
                solver.Ixx.assign(gxx.data.begin(), gxx.data.end());
                solver.Ixy.assign(gxy.data.begin(), gxy.data.end());
                solver.Iyy.assign(gyy.data.begin(), gyy.data.end());
            }
            solver.run(u, v, du, dv);
            for (std::size_t k = 0; k < n; ++k) {
                u[k] += du[k];
                v[k] += dv[k];
            }
        }
    }

    VectorField result(from.width, from.height);
    result.dx = std::move(u);
    result.dy = std::move(v);

    // Never return a field worse than doing nothing.
    VectorField zero(from.width, from.height);
    if (flow_energy(from, to, result, params).total > flow_energy(from, to, zero, params).total)
        return zero;
    return result;
}

FlowEnergy flow_energy(const ImageGrid& from, const ImageGrid& to, const VectorField& field,
                       const FlowParams& params) {
    if (!from.same_size(to) || !field.same_size(to))
        throw std::invalid_argument("flow_energy: dimension mismatch");
    const int w = to.width, h = to.height;
    ImageGrid from_g = from, to_g = to;
    for (auto& v : from_g.data) v *= GRAY_SCALE;
    for (auto& v : to_g.data) v *= GRAY_SCALE;
    ImageGrid fx = derivative_x(from_g), fy = derivative_y(from_g);
    ImageGrid tx = derivative_x(to_g), ty = derivative_y(to_g);

    FlowEnergy e;
    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x, ++i) {
            double xs = x + field.dx[i], ys = y + field.dy[i];
            double rb = sample_bilinear(from_g, xs, ys) - to_g.data[i];
            double rgx = sample_bilinear(fx, xs, ys) - tx.data[i];
            double rgy = sample_bilinear(fy, xs, ys) - ty.data[i];
            e.data += psi(rb * rb);
            e.gradient += psi(rgx * rgx + rgy * rgy);
        }
    }
    auto ixd = [&](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
    for (int y = 0; y < h; ++y) {
        int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        double wy = yd - yu > 0 ? 1.0 / (yd - yu) : 1.0;
        for (int x = 0; x < w; ++x) {
            int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            double wx = xr - xl > 0 ? 1.0 / (xr - xl) : 1.0;
            double ux = (field.dx[ixd(xr, y)] - field.dx[ixd(xl, y)]) * wx;
            double uy = (field.dx[ixd(x, yd)] - field.dx[ixd(x, yu)]) * wy;
            double vx = (field.dy[ixd(xr, y)] - field.dy[ixd(xl, y)]) * wx;
            double vy = (field.dy[ixd(x, yd)] - field.dy[ixd(x, yu)]) * wy;
            e.smoothness += psi(ux * ux + uy * uy + vx * vx + vy * vy) - psi(0.0);
        }
    }
    e.total = e.data + params.gamma * e.gradient + params.alpha * e.smoothness;
    return e;
}

} // namespace turbi
