#include "turbi/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "turbi/common.hpp"

namespace turbi {

namespace {

void validate(const FusionParams& p) {
    if (p.window < 3 || p.window % 2 == 0)
        throw std::invalid_argument("fusion: window must be odd and >= 3");
    if (p.patch_size < 3 || p.patch_size % 2 == 0)
        throw std::invalid_argument("fusion: patch_size must be odd and >= 3");
    if (p.tau < 0.0) throw std::invalid_argument("fusion: tau must be >= 0");
    if (p.beta < 0.0 || p.beta > 1.0)
        throw std::invalid_argument("fusion: beta must lie in [0,1]");
    if (p.guided_radius < 0)
        throw std::invalid_argument("fusion: guided_radius must be >= 0");
    if (p.guided_eps < 0.0)
        throw std::invalid_argument("fusion: guided_eps must be >= 0");
}

// Box mean with replicate padding: every window has the full (2r+1)^2
// count, border pixels are repeated. Distinct from box_mean(), which
// shrinks the window at the borders instead.
ImageGrid box_mean_replicate(const ImageGrid& in, int radius) {
    const int w = in.width, h = in.height;
    const int side = 2 * radius + 1;
    ImageGrid horiz(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dx = -radius; dx <= radius; ++dx)
                s += in.at(std::clamp(x + dx, 0, w - 1), y);
            horiz.at(x, y) = s;
        }
    }
    ImageGrid out(w, h);
    const double inv = 1.0 / (static_cast<double>(side) * side);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                s += horiz.at(x, std::clamp(y + dy, 0, h - 1));
            out.at(x, y) = s * inv;
        }
    }
    return out;
}

ImageGrid crop(const ImageGrid& in, int x0, int y0, int x1, int y1) {
    ImageGrid out(x1 - x0 + 1, y1 - y0 + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) out.at(x - x0, y - y0) = in.at(x, y);
    return out;
}

double laplacian_norm(const ImageGrid& patch) {
    ImageGrid lap = laplacian(patch);
    double s = 0.0;
    for (double v : lap.data) s += v * v;
    return std::sqrt(s);
}

} // namespace

LowRankSplit lowrank_split(const std::vector<ImageGrid>& registered,
                           const RpcaParams& params) {
    if (registered.size() < 2)
        throw std::invalid_argument("lowrank_split: need at least 2 frames");
    const int w = registered.front().width;
    const int h = registered.front().height;
    for (const ImageGrid& f : registered)
        if (!f.same_size(registered.front()))
            throw std::invalid_argument("lowrank_split: frame sizes differ");

    const std::size_t pixels = registered.front().size();
    const std::size_t frames = registered.size();
    Matrix stack(pixels, frames);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t i = 0; i < pixels; ++i)
            stack(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                registered[t].data[i];

    RpcaResult decomposition = rpca(stack, params);

    LowRankSplit split;
    split.lowrank = ImageGrid(w, h);
    for (std::size_t i = 0; i < pixels; ++i)
        split.lowrank.data[i] =
            decomposition.L.row(static_cast<Eigen::Index>(i)).mean();
    split.sparse.reserve(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        ImageGrid s(w, h);
        for (std::size_t i = 0; i < pixels; ++i)
            s.data[i] = decomposition.S(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(t));
        split.sparse.push_back(std::move(s));
    }
    return split;
}

ImageGrid adaptive_threshold(const ImageGrid& mean_sparse, const FusionParams& params) {
    validate(params);
    if (params.window > mean_sparse.width || params.window > mean_sparse.height)
        throw std::invalid_argument("adaptive_threshold: window larger than image");

    ImageGrid magnitude(mean_sparse.width, mean_sparse.height);
    for (std::size_t i = 0; i < mean_sparse.size(); ++i)
        magnitude.data[i] = std::abs(mean_sparse.data[i]);
    ImageGrid local = box_mean_replicate(magnitude, params.window / 2);

    // thresh is calibrated in gray levels; the sparse components live on
    // the [0,1] intensity scale.
    const double level = params.thresh / 255.0;
    ImageGrid mask(mean_sparse.width, mean_sparse.height);
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask.data[i] = std::abs(magnitude.data[i] - local.data[i]) > level ? 1.0 : 0.0;
    return mask;
}

ImageGrid guided_filter(const ImageGrid& input, const ImageGrid& guide,
                        int radius, double eps) {
    if (!input.same_size(guide))
        throw std::invalid_argument("guided_filter: input and guide sizes differ");
    if (radius < 0) throw std::invalid_argument("guided_filter: radius must be >= 0");

    const std::size_t n = input.size();
    ImageGrid guide_sq(input.width, input.height);
    ImageGrid cross(input.width, input.height);
    for (std::size_t i = 0; i < n; ++i) {
        guide_sq.data[i] = guide.data[i] * guide.data[i];
        cross.data[i] = guide.data[i] * input.data[i];
    }

    ImageGrid mean_guide = box_mean(guide, radius);
    ImageGrid mean_input = box_mean(input, radius);
    ImageGrid corr_guide = box_mean(guide_sq, radius);
    ImageGrid corr_cross = box_mean(cross, radius);

    ImageGrid a(input.width, input.height);
    ImageGrid b(input.width, input.height);
    for (std::size_t i = 0; i < n; ++i) {
        const double var = corr_guide.data[i] - mean_guide.data[i] * mean_guide.data[i];
        const double cov = corr_cross.data[i] - mean_guide.data[i] * mean_input.data[i];
        const double denom = std::max(var, 0.0) + eps;
        a.data[i] = denom > 0.0 ? cov / denom : 0.0;
        b.data[i] = mean_input.data[i] - a.data[i] * mean_guide.data[i];
    }

    ImageGrid mean_a = box_mean(a, radius);
    ImageGrid mean_b = box_mean(b, radius);
    ImageGrid out(input.width, input.height);
    for (std::size_t i = 0; i < n; ++i)
        out.data[i] = mean_a.data[i] * guide.data[i] + mean_b.data[i];
    return out;
}

std::vector<SelectedPatch> select_sharpest_patches(
    const std::vector<ImageGrid>& sparse_frames, const ImageGrid& mask, int k_patch) {
    if (sparse_frames.empty())
        throw std::invalid_argument("select_sharpest_patches: no frames");
    if (k_patch < 3 || k_patch % 2 == 0)
        throw std::invalid_argument("select_sharpest_patches: patch size must be odd and >= 3");
    for (const ImageGrid& f : sparse_frames)
        if (!f.same_size(mask))
            throw std::invalid_argument("select_sharpest_patches: frame/mask sizes differ");
    const int w = mask.width, h = mask.height;
    if (w < 3 || h < 3)
        throw std::invalid_argument("select_sharpest_patches: image smaller than 3x3");

    const int half = k_patch / 2;
    std::vector<SelectedPatch> patches;
    for (int cy = 0; cy < h; ++cy) {
        for (int cx = 0; cx < w; ++cx) {
            if (mask.at(cx, cy) < 0.5) continue;
            SelectedPatch p;
            p.cx = cx;
            p.cy = cy;
            p.x0 = std::max(0, cx - half);
            p.x1 = std::min(w - 1, cx + half);
            p.y0 = std::max(0, cy - half);
            p.y1 = std::min(h - 1, cy + half);

            // The Laplacian score needs a window of at least 3 pixels a
            // side; corner-clipped footprints are widened inward for the
            // score only, the stored patch keeps the clipped footprint.
            int ex0 = p.x0, ex1 = p.x1, ey0 = p.y0, ey1 = p.y1;
            while (ex1 - ex0 + 1 < 3) {
                if (ex0 > 0) --ex0;
                else ++ex1;
            }
            while (ey1 - ey0 + 1 < 3) {
                if (ey0 > 0) --ey0;
                else ++ey1;
            }

            double best_score = -1.0;
            int best_frame = 0;
            for (std::size_t t = 0; t < sparse_frames.size(); ++t) {
                const double score =
                    laplacian_norm(crop(sparse_frames[t], ex0, ey0, ex1, ey1));
                if (score > best_score) {
                    best_score = score;
                    best_frame = static_cast<int>(t);
                }
            }
            p.frame = best_frame;
            p.values = crop(sparse_frames[best_frame], p.x0, p.y0, p.x1, p.y1);
            patches.push_back(std::move(p));
        }
    }
    return patches;
}

ImageGrid enhance_patch(const ImageGrid& patch, double tau, int guided_radius,
                        double guided_eps) {
    ImageGrid smooth = guided_filter(patch, patch, guided_radius, guided_eps);
    ImageGrid out(patch.width, patch.height);
    for (std::size_t i = 0; i < patch.size(); ++i)
        out.data[i] = patch.data[i] + tau * (patch.data[i] - smooth.data[i]);
    return out;
}

DetailLayer detail_layer(const std::vector<SelectedPatch>& patches, int width,
                         int height) {
    DetailLayer layer;
    layer.values = ImageGrid(width, height);
    layer.support = ImageGrid(width, height);
    ImageGrid best_mag(width, height);
    for (const SelectedPatch& p : patches) {
        for (int y = p.y0; y <= p.y1; ++y) {
            for (int x = p.x0; x <= p.x1; ++x) {
                const double v = p.values.at(x - p.x0, y - p.y0);
                const double m = std::abs(v);
                if (layer.support.at(x, y) < 0.5 || m > best_mag.at(x, y)) {
                    layer.values.at(x, y) = v;
                    best_mag.at(x, y) = m;
                    layer.support.at(x, y) = 1.0;
                }
            }
        }
    }
    return layer;
}

DetailLayer build_detail(const std::vector<ImageGrid>& sparse_frames,
                         const FusionParams& params) {
    validate(params);
    if (sparse_frames.empty())
        throw std::invalid_argument("build_detail: no sparse frames");
    const int w = sparse_frames.front().width;
    const int h = sparse_frames.front().height;

    ImageGrid mean_sparse(w, h);
    for (const ImageGrid& f : sparse_frames) {
        if (!f.same_size(sparse_frames.front()))
            throw std::invalid_argument("build_detail: frame sizes differ");
        for (std::size_t i = 0; i < mean_sparse.size(); ++i)
            mean_sparse.data[i] += f.data[i];
    }
    const double inv_count = 1.0 / static_cast<double>(sparse_frames.size());
    for (double& v : mean_sparse.data) v *= inv_count;

    ImageGrid mask = adaptive_threshold(mean_sparse, params);
    std::vector<SelectedPatch> patches =
        select_sharpest_patches(sparse_frames, mask, params.patch_size);

    parallel_for(patches.size(), params.threads, [&](std::size_t i) {
        SelectedPatch& p = patches[i];
        ImageGrid enhanced =
            enhance_patch(p.values, params.tau, params.guided_radius, params.guided_eps);
        ImageGrid binary = crop(mask, p.x0, p.y0, p.x1, p.y1);
        ImageGrid weight =
            guided_filter(binary, p.values, params.guided_radius, params.guided_eps);
        for (std::size_t j = 0; j < enhanced.size(); ++j)
            enhanced.data[j] *= weight.data[j];
        p.values = std::move(enhanced);
    });

    return detail_layer(patches, w, h);
}

ImageGrid fuse(const ImageGrid& deblurred, const DetailLayer& detail, double beta) {
    if (!deblurred.same_size(detail.values))
        throw std::invalid_argument("fuse: image and detail layer sizes differ");
    ImageGrid out(deblurred.width, deblurred.height);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = clamp01(deblurred.data[i] + beta * detail.values.data[i]);
    return out;
}

} // namespace turbi
