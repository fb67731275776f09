#pragma once

#include "turbi/image.hpp"

namespace turbi {

// Dense variational optical flow: brightness and gradient constancy data
// terms plus a robust smoothness term, all under Psi(s^2) = sqrt(s^2 + 1e-6),
// minimized coarse-to-fine with nested fixed-point iterations and SOR.
struct FlowParams {
    double alpha = 30.0;        // smoothness weight
    double gamma = 10.0;        // gradient constancy weight
    double pyramid_factor = 0.5;
    int levels = 0;             // 0 = deepest pyramid with coarsest side >= 16
    int outer_iters = 5;        // warping iterations per level
    int inner_iters = 5;        // lagged-nonlinearity updates per warp
    int sor_iters = 30;
    double sor_omega = 1.9;
};

struct FlowEnergy {
    double data = 0.0;        // sum Psi(brightness residual^2)
    double gradient = 0.0;    // sum Psi(|gradient residual|^2), unweighted
    double smoothness = 0.0;  // sum (Psi(|grad w|^2) - Psi(0)), unweighted
    double total = 0.0;       // data + gamma * gradient + alpha * smoothness
};

// Field w such that warp(from, w) approximates `to`; w lives on the grid of
// `to`. The returned field never has higher energy than the zero field.
// Requires both sides >= 16 and matching dimensions.
VectorField flow(const ImageGrid& from, const ImageGrid& to, const FlowParams& params = {});

// Discrete energy of a candidate field under the same functional the solver
// minimizes. Intensity residuals are measured in gray levels (0..255), the
// scale the default weights were balanced for. The smoothness term is
// reported relative to the constant-field baseline, so a zero field between
// identical images has zero smoothness and Psi(0) * area in each data term.
FlowEnergy flow_energy(const ImageGrid& from, const ImageGrid& to, const VectorField& field,
                       const FlowParams& params = {});

} // namespace turbi
