#pragma once

#include <vector>

#include "turbi/image.hpp"
#include "turbi/rpca.hpp"

namespace turbi {

struct FusionParams {
    int window = 7;          // adaptive-threshold box side
    double thresh = 1.0;     // in gray levels (0..255 scale), see adaptive_threshold
    int patch_size = 7;      // K
    double tau = 1.7;        // unsharp weight
    double beta = 0.5;       // detail-layer weight in [0,1]
    int guided_radius = 3;   // (K-1)/2
    double guided_eps = 1e-4;
    RpcaParams rpca;
    int threads = 1;
};

struct LowRankSplit {
    ImageGrid lowrank;                // row-mean of the low-rank columns, unclamped
    std::vector<ImageGrid> sparse;    // signed residual per frame
};

// One selected texture patch: where it sits, which sparse frame it came
// from, and its weighted enhanced values over the (border-clipped)
// footprint.
struct SelectedPatch {
    int cx = 0, cy = 0;
    int frame = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
    ImageGrid values;
};

struct DetailLayer {
    ImageGrid values;   // signed, zero off support
    ImageGrid support;  // 1 where any patch contributed
};

// Stacks the registered frames as matrix columns and splits them with
// RPCA. The sparse frames keep their sign; fuse() clamps at the end.
LowRankSplit lowrank_split(const std::vector<ImageGrid>& registered,
                           const RpcaParams& params = {});

// Pixel is flagged when its magnitude deviates from the neighborhood mean
// magnitude (replicate-padded window) by more than the threshold. The
// threshold parameter is calibrated in gray levels and divided by 255
// before comparison against [0,1]-scale data.
ImageGrid adaptive_threshold(const ImageGrid& mean_sparse, const FusionParams& params);

// Standard local-linear-model guided filter (clipped count-normalized box
// windows). Windows with zero variance take the b-only path.
ImageGrid guided_filter(const ImageGrid& input, const ImageGrid& guide,
                        int radius, double eps);

// For every flagged pixel, the K x K patch (clipped at borders) from the
// sparse frame with the largest Laplacian Frobenius norm; ties keep the
// lowest frame index. values are raw patch contents at this stage.
std::vector<SelectedPatch> select_sharpest_patches(
    const std::vector<ImageGrid>& sparse_frames, const ImageGrid& mask, int k_patch);

// Unsharp masking with the patch as its own guide.
ImageGrid enhance_patch(const ImageGrid& patch, double tau, int guided_radius,
                        double guided_eps);

// Max-|value| merge of weighted patches; equal magnitudes keep the lowest
// patch index; uncovered pixels stay zero.
DetailLayer detail_layer(const std::vector<SelectedPatch>& patches, int width,
                         int height);

// Full detail path: mean sparse -> adaptive threshold -> patch selection ->
// enhancement -> guided weights -> max merge.
DetailLayer build_detail(const std::vector<ImageGrid>& sparse_frames,
                         const FusionParams& params);

// deblurred + beta * detail, clamped to [0,1].
ImageGrid fuse(const ImageGrid& deblurred, const DetailLayer& detail, double beta);

} // namespace turbi
