#include "turbi/stabilize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "turbi/common.hpp"
#include "turbi/image_io.hpp"

namespace turbi {

FieldMatrixPlanes field_matrix(const std::vector<VectorField>& columns) {
    if (columns.empty()) throw std::invalid_argument("field_matrix: no columns");
    const std::size_t pixels = columns[0].size();
    FieldMatrixPlanes planes;
    planes.horizontal.resize(static_cast<Eigen::Index>(pixels), columns.size());
    planes.vertical.resize(static_cast<Eigen::Index>(pixels), columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].size() != pixels)
            throw std::invalid_argument("field_matrix: column size mismatch");
        for (std::size_t p = 0; p < pixels; ++p) {
            planes.horizontal(p, j) = columns[j].dx[p];
            planes.vertical(p, j) = columns[j].dy[p];
        }
    }
    return planes;
}

std::vector<std::vector<VectorField>> pairwise_fields(
    const std::vector<ImageGrid>& frames, const StabilizeParams& params) {
    const int t = static_cast<int>(frames.size());
    if (t < 2) throw std::invalid_argument("pairwise_fields: need at least 2 frames");
    for (const ImageGrid& f : frames)
        if (!f.same_size(frames[0]))
            throw std::invalid_argument("pairwise_fields: size mismatch");

    std::vector<std::vector<VectorField>> table(t);
    for (int i = 0; i < t; ++i)
        table[i].assign(t, VectorField(frames[0].width, frames[0].height));

    // Flatten the off-diagonal pairs; every task writes only its own slot.
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(t) * (t - 1));
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j)
            if (i != j) pairs.emplace_back(i, j);
    parallel_for(pairs.size(), params.threads, [&](std::size_t k) {
        auto [i, j] = pairs[k];
        table[i][j] = flow(frames[i], frames[j], params.flow);
    });
    return table;
}

namespace {

// Row-wise mean taken column by column so the fallback branch reproduces a
// plain running mean of the input fields bit for bit.
void accumulate_mean(const Matrix& m, std::vector<double>& out) {
    const Eigen::Index rows = m.rows(), cols = m.cols();
    out.assign(static_cast<std::size_t>(rows), 0.0);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] += m(r, j);
    const double inv = 1.0 / static_cast<double>(cols);
    for (double& v : out) v *= inv;
}

// One displacement plane: RPCA, then either the low-rank mean or the raw
// column mean depending on how dense the sparse part came out.
void plane_mean(const Matrix& plane, const StabilizeParams& params,
                std::vector<double>& out, int& branch, double& density) {
    RpcaResult r = rpca(plane, params.rpca);
    density = nonzero_density(r.S, params.sparse_threshold);
    bool use_lowrank = r.converged && density < params.density_threshold_fraction;
    if (!r.converged)
        log_warn("stabilizing_field: rpca did not converge, using centroid fallback");
    branch = use_lowrank ? 1 : 0;
    accumulate_mean(use_lowrank ? r.L : plane, out);
}

} // namespace

StabilizingFieldInfo stabilizing_field(const std::vector<VectorField>& columns,
                                       const StabilizeParams& params) {
    if (columns.size() < 2)
        throw std::invalid_argument("stabilizing_field: need at least 2 columns");
    FieldMatrixPlanes planes = field_matrix(columns);

    StabilizingFieldInfo info;
    info.field = VectorField(columns[0].width, columns[0].height);
    plane_mean(planes.horizontal, params, info.field.dx, info.branch_x, info.density_x);
    plane_mean(planes.vertical, params, info.field.dy, info.branch_y, info.density_y);
    return info;
}

VectorField fold_free_warp_field(const VectorField& raw, const StabilizeParams& params,
                                 int* retries_out) {
    BeltramiField mu = beltrami_from_field(raw);
    BeltramiField clamped = clamp_beltrami(mu, params.clamp_epsilon);

    // Dirichlet data comes from the raw field's border so translations and
    // other conformal components survive the reconstruction. Each retry
    // shrinks the coefficient and the boundary together, so the ladder
    // degenerates toward the identity map, which never folds.
    double scale = 1.0;
    for (int attempt = 0; attempt <= params.max_fold_retries; ++attempt) {
        BeltramiField trial = clamped;
        VectorField boundary = raw;
        if (scale != 1.0) {
            for (auto& c : trial.mu) c *= scale;
            for (auto& v : boundary.dx) v *= scale;
            for (auto& v : boundary.dy) v *= scale;
        }
        LbsResult res = lbs_solve(trial, &boundary, params.lbs);
        if (min_interior_jacobian(res.field) > 0.0) {
            if (retries_out) *retries_out = attempt;
            if (attempt > 0)
                log_debug("fold_free_warp_field: passed after " +
                          std::to_string(attempt) + " shrink retries");
            return res.field;
        }
        scale *= params.fold_shrink;
    }
    log_warn("fold_free_warp_field: returning identity after retries");
    if (retries_out) *retries_out = params.max_fold_retries + 1;
    return VectorField(raw.width, raw.height);
}

namespace {

StabilizeLogRow make_row(int frame, const char* stage, const char* action,
                         const StabilizingFieldInfo& info, const VectorField& applied) {
    StabilizeLogRow row;
    row.frame = frame;
    row.stage = stage;
    row.action = action;
    row.branch_x = info.branch_x;
    row.branch_y = info.branch_y;
    row.density_x = info.density_x;
    row.density_y = info.density_y;
    row.pre_mean_flow = mean_magnitude(info.field);
    row.post_mean_flow = mean_magnitude(applied);
    return row;
}

} // namespace

StabilizeResult internal_stabilize(const std::vector<ImageGrid>& frames,
                                   const StabilizeParams& params) {
    const int t = static_cast<int>(frames.size());
    auto table = pairwise_fields(frames, params);

    StabilizeResult result;
    result.frames.resize(t);
    result.fields.resize(t);
    result.log.resize(t);
    parallel_for(static_cast<std::size_t>(t), params.threads, [&](std::size_t i) {
        StabilizingFieldInfo info = stabilizing_field(table[i], params);
        VectorField applied = fold_free_warp_field(info.field, params);
        result.frames[i] = warp(frames[i], applied);
        result.log[i] = make_row(static_cast<int>(i), "internal", "stabilize", info, applied);
        result.fields[i] = std::move(applied);
    });
    return result;
}

StabilizeResult absorbing_stabilize(const std::vector<ImageGrid>& stabilized,
                                    const std::vector<ImageGrid>& original,
                                    const std::vector<double>& sharpness,
                                    const std::vector<int>& subsample_indices,
                                    const StabilizeParams& params) {
    const int t_samp = static_cast<int>(stabilized.size());
    if (t_samp < 1) throw std::invalid_argument("absorbing_stabilize: empty sequence");
    if (static_cast<int>(original.size()) < t_samp)
        throw std::invalid_argument("absorbing_stabilize: fewer originals than stabilized");
    if (sharpness.size() != original.size())
        throw std::invalid_argument("absorbing_stabilize: sharpness size mismatch");
    if (static_cast<int>(subsample_indices.size()) != t_samp)
        throw std::invalid_argument("absorbing_stabilize: index count mismatch");

    // The t_samp sharpest originals; equal scores keep the earlier frame.
    std::vector<int> order(original.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sharpness[a] > sharpness[b]; });
    order.resize(t_samp);
    std::sort(order.begin(), order.end());

    StabilizeResult result;
    result.frames.resize(t_samp);
    result.fields.resize(t_samp);
    result.log.resize(t_samp);
    parallel_for(static_cast<std::size_t>(t_samp), params.threads, [&](std::size_t j) {
        const int h = order[j];
        auto pos = std::find(subsample_indices.begin(), subsample_indices.end(), h);
        if (pos != subsample_indices.end()) {
            // Already stabilized internally; reuse it as-is.
            std::size_t k = static_cast<std::size_t>(pos - subsample_indices.begin());
            result.frames[j] = stabilized[k];
            result.fields[j] = VectorField(stabilized[k].width, stabilized[k].height);
            StabilizeLogRow row;
            row.frame = h;
            row.stage = "absorb";
            row.action = "reuse";
            result.log[j] = row;
            return;
        }
        std::vector<VectorField> columns(stabilized.size());
        for (std::size_t i = 0; i < stabilized.size(); ++i)
            columns[i] = flow(original[h], stabilized[i], params.flow);
        StabilizingFieldInfo info = stabilizing_field(columns, params);
        VectorField applied = fold_free_warp_field(info.field, params);
        result.frames[j] = warp(original[h], applied);
        result.log[j] = make_row(h, "absorb", "stabilize", info, applied);
        result.fields[j] = std::move(applied);
    });
    return result;
}

StabilizeResult register_to_reference(const std::vector<ImageGrid>& frames,
                                      const ImageGrid& reference,
                                      const StabilizeParams& params) {
    if (frames.empty()) throw std::invalid_argument("register_to_reference: no frames");
    for (const ImageGrid& f : frames)
        if (!f.same_size(reference))
            throw std::invalid_argument("register_to_reference: size mismatch");

    StabilizeResult result;
    result.frames.resize(frames.size());
    result.fields.resize(frames.size());
    result.log.resize(frames.size());
    parallel_for(frames.size(), params.threads, [&](std::size_t i) {
        VectorField raw = flow(frames[i], reference, params.flow);
        VectorField applied = fold_free_warp_field(raw, params);
        result.frames[i] = warp(frames[i], applied);
        StabilizeLogRow row;
        row.frame = static_cast<int>(i);
        row.stage = "register";
        row.action = "stabilize";
        row.pre_mean_flow = mean_magnitude(raw);
        row.post_mean_flow = mean_magnitude(applied);
        result.log[i] = row;
        result.fields[i] = std::move(applied);
    });
    return result;
}

void write_stabilize_log_csv(const std::string& path,
                             const std::vector<StabilizeLogRow>& rows) {
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> cells;
    cells.reserve(rows.size());
    for (const StabilizeLogRow& r : rows)
        cells.push_back({std::to_string(r.frame), r.stage, r.action,
                         std::to_string(r.branch_x), std::to_string(r.branch_y),
                         fmt(r.density_x), fmt(r.density_y), fmt(r.pre_mean_flow),
                         fmt(r.post_mean_flow)});
    write_csv(path,
              {"frame", "stage", "action", "branch_x", "branch_y", "density_x",
               "density_y", "pre_mean_flow", "post_mean_flow"},
              cells);
}

} // namespace turbi
