#pragma once

#include <string>
#include <vector>

#include "turbi/image.hpp"
#include "turbi/optflow.hpp"
#include "turbi/quasiconformal.hpp"
#include "turbi/rpca.hpp"

namespace turbi {

struct StabilizeParams {
    // Sparse-density fraction below which the low-rank mean is trusted;
    // at or above it the plane falls back to the raw column mean.
    double density_threshold_fraction = 0.5;
    double clamp_epsilon = 0.01;  // Beltrami clamp
    // When the clamped coefficient still yields a folding discrete map,
    // shrink it geometrically and re-solve until the Jacobian scan passes.
    double fold_shrink = 0.85;
    int max_fold_retries = 16;
    // Displacement magnitude below which a sparse-part entry counts as
    // zero. On the pixel scale of flow fields, entries under a twentieth
    // of a pixel are estimation jitter, not structure.
    double sparse_threshold = 0.05;
    FlowParams flow;
    RpcaParams rpca;
    LbsParams lbs;
    int threads = 1;
};

// One structured-log line per processed frame. branch_* is 1 when the
// low-rank mean was used, 0 for the centroid fallback, -1 when no RPCA ran
// (reused frames). pre/post are mean magnitudes of the correction field
// before and after the fold-free projection.
struct StabilizeLogRow {
    int frame = 0;
    std::string stage;  // internal | absorb | register
    std::string action; // stabilize | reuse
    int branch_x = -1;
    int branch_y = -1;
    double density_x = 0.0;
    double density_y = 0.0;
    double pre_mean_flow = 0.0;
    double post_mean_flow = 0.0;
};

struct StabilizeResult {
    std::vector<ImageGrid> frames;
    std::vector<VectorField> fields;  // the warp actually applied per frame
    std::vector<StabilizeLogRow> log;
};

// Both displacement planes of a set of fields, stacked as pixel-row,
// frame-column matrices.
struct FieldMatrixPlanes {
    Matrix horizontal;
    Matrix vertical;
};

FieldMatrixPlanes field_matrix(const std::vector<VectorField>& columns);

// table[i][j] = flow(frame_i, frame_j); the diagonal stays exactly zero.
std::vector<std::vector<VectorField>> pairwise_fields(
    const std::vector<ImageGrid>& frames, const StabilizeParams& params);

struct StabilizingFieldInfo {
    VectorField field;
    int branch_x = 0;
    int branch_y = 0;
    double density_x = 0.0;
    double density_y = 0.0;
};

// RPCA-filtered mean of the given deformation fields, decided per plane:
// sparse part mostly empty -> mean of the low-rank columns, otherwise the
// plain column mean (bit-identical to averaging the inputs directly).
StabilizingFieldInfo stabilizing_field(const std::vector<VectorField>& columns,
                                       const StabilizeParams& params);

// Projects a raw displacement onto a fold-free one: Beltrami coefficient,
// clamp, reconstruct with the raw border as Dirichlet data, verify the
// Jacobian scan; shrinks coefficient and boundary together and retries if
// the discrete map still folds.
VectorField fold_free_warp_field(const VectorField& raw, const StabilizeParams& params,
                                 int* retries_out = nullptr);

// Warps every frame by the fold-free mean of its outgoing flows to all
// other frames, pulling the sequence toward its deformation centroid.
StabilizeResult internal_stabilize(const std::vector<ImageGrid>& frames,
                                   const StabilizeParams& params);

// Swaps sharper source frames into the stabilized sequence: the T_samp
// sharpest originals are kept; ones already in the subsample reuse their
// stabilized version, the rest are aligned against the whole stabilized
// sequence and warped in. Output is ordered by original frame index.
StabilizeResult absorbing_stabilize(const std::vector<ImageGrid>& stabilized,
                                    const std::vector<ImageGrid>& original,
                                    const std::vector<double>& sharpness,
                                    const std::vector<int>& subsample_indices,
                                    const StabilizeParams& params);

// Aligns each frame to the reference with a fold-free warp.
StabilizeResult register_to_reference(const std::vector<ImageGrid>& frames,
                                      const ImageGrid& reference,
                                      const StabilizeParams& params);

void write_stabilize_log_csv(const std::string& path,
                             const std::vector<StabilizeLogRow>& rows);

} // namespace turbi
