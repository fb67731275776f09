#include "turbi/subsample.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "turbi/common.hpp"
#include "turbi/image_io.hpp"

namespace turbi {

double sharpness_raw(const ImageGrid& image) {
    ImageGrid lap = laplacian(image);
    double s = 0.0;
    for (double v : lap.data) s += std::abs(v);
    return s;
}

std::vector<double> normalized_sharpness(const std::vector<ImageGrid>& frames,
                                         int threads) {
    std::vector<double> raw(frames.size(), 0.0);
    parallel_for(frames.size(), threads,
                 [&](std::size_t i) { raw[i] = sharpness_raw(frames[i]); });
    auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi - lo <= 0.0) return std::vector<double>(frames.size(), 0.0);
    for (double& v : raw) v = (v - lo) / (hi - lo);
    return raw;
}

double frame_energy(const ImageGrid& reference, const ImageGrid& frame,
                    double sharpness, double lambda_samp) {
    if (!reference.same_size(frame))
        throw std::invalid_argument("frame_energy: size mismatch");
    double l2 = 0.0;
    for (std::size_t i = 0; i < frame.data.size(); ++i) {
        double d = reference.data[i] - frame.data[i];
        l2 += d * d;
    }
    return l2 + lambda_samp * (1.0 - sharpness);
}

double quality_energy(const ImageGrid& reference, const std::vector<int>& indices,
                      const std::vector<ImageGrid>& frames,
                      const std::vector<double>& sharpness, double lambda_samp) {
    if (indices.empty()) throw std::invalid_argument("quality_energy: empty index set");
    double total = 0.0;
    for (int i : indices) {
        if (i < 0 || i >= static_cast<int>(frames.size()))
            throw std::out_of_range("quality_energy: frame index");
        total += frame_energy(reference, frames[i], sharpness[i], lambda_samp);
    }
    return total / static_cast<double>(indices.size());
}

ImageGrid temporal_mean(const std::vector<ImageGrid>& frames,
                        const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("temporal_mean: empty index set");
    std::vector<int> order = indices;
    std::sort(order.begin(), order.end());
    ImageGrid acc(frames[order[0]].width, frames[order[0]].height, 0.0);
    for (int i : order) {
        const ImageGrid& f = frames[i];
        if (!acc.same_size(f)) throw std::invalid_argument("temporal_mean: size mismatch");
        for (std::size_t p = 0; p < acc.data.size(); ++p) acc.data[p] += f.data[p];
    }
    double inv = 1.0 / static_cast<double>(order.size());
    for (double& v : acc.data) v *= inv;
    return acc;
}

ImageGrid temporal_mean(const std::vector<ImageGrid>& frames) {
    std::vector<int> all(frames.size());
    std::iota(all.begin(), all.end(), 0);
    return temporal_mean(frames, all);
}

namespace {

std::vector<double> all_frame_energies(const std::vector<ImageGrid>& frames,
                                       const std::vector<double>& sharpness,
                                       const ImageGrid& reference,
                                       double lambda_samp, int threads) {
    std::vector<double> e(frames.size(), 0.0);
    parallel_for(frames.size(), threads, [&](std::size_t i) {
        e[i] = frame_energy(reference, frames[i], sharpness[i], lambda_samp);
    });
    return e;
}

// k indices with the smallest values; equal values keep the lower index.
// Returned ascending.
std::vector<int> k_smallest(const std::vector<double>& values, int k) {
    std::vector<int> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values[a] < values[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

} // namespace

SubsetOutcome best_subset_of_size(const std::vector<ImageGrid>& frames,
                                  const std::vector<double>& sharpness, int k,
                                  const SubsampleParams& params,
                                  const ImageGrid* warm_reference) {
    const int t = static_cast<int>(frames.size());
    if (t < 2) throw std::invalid_argument("best_subset_of_size: need at least 2 frames");
    if (k < 2 || k > t) throw std::invalid_argument("best_subset_of_size: k out of range");
    if (static_cast<int>(sharpness.size()) != t)
        throw std::invalid_argument("best_subset_of_size: sharpness size mismatch");

    const double eps = params.eps_energy > 0.0
                           ? params.eps_energy
                           : 1e-6 * static_cast<double>(frames[0].size());

    SubsetOutcome out;
    if (warm_reference != nullptr) {
        std::vector<double> e = all_frame_energies(frames, sharpness, *warm_reference,
                                                   params.lambda_samp, params.threads);
        out.indices = k_smallest(e, k);
    } else {
        // Seed with the k sharpest frames; negate so the smallest-value
        // helper picks the highest scores.
        std::vector<double> neg(sharpness.size());
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -sharpness[i];
        out.indices = k_smallest(neg, k);
    }
    out.reference = temporal_mean(frames, out.indices);
    out.eq_trace.push_back(quality_energy(out.reference, out.indices, frames,
                                          sharpness, params.lambda_samp));

    for (int iter = 0; iter < params.max_alternations; ++iter) {
        std::vector<double> e = all_frame_energies(frames, sharpness, out.reference,
                                                   params.lambda_samp, params.threads);
        std::vector<int> next = k_smallest(e, k);
        if (next == out.indices) break;
        out.indices = std::move(next);
        out.reference = temporal_mean(frames, out.indices);
        double eq = quality_energy(out.reference, out.indices, frames, sharpness,
                                   params.lambda_samp);
        double gap = out.eq_trace.back() - eq;
        out.eq_trace.push_back(eq);
        if (gap < eps) break;
    }
    return out;
}

SubsampleResult subsample(const std::vector<ImageGrid>& frames,
                          const SubsampleParams& params) {
    const int t = static_cast<int>(frames.size());
    if (t < 2) throw std::invalid_argument("subsample: need at least 2 frames");
    for (const ImageGrid& f : frames)
        if (!f.same_size(frames[0])) throw std::invalid_argument("subsample: size mismatch");

    const int k_lo = std::max(2, params.k_min);
    const int k_hi = params.k_max > 0 ? std::min(params.k_max, t) : t;
    if (k_lo > k_hi) throw std::invalid_argument("subsample: empty candidate range");

    std::vector<double> sharp = normalized_sharpness(frames, params.threads);

    bool all_identical = true;
    for (int i = 1; i < t && all_identical; ++i)
        all_identical = frames[i].data == frames[0].data;

    double alpha = params.alpha;
    if (alpha <= 0.0) {
        ImageGrid full_mean = temporal_mean(frames);
        std::vector<double> e = all_frame_energies(frames, sharp, full_mean,
                                                   params.lambda_samp, params.threads);
        std::sort(e.begin(), e.end());
        double med = e[e.size() / 2];
        if (med <= 0.0) med = 1.0;
        // Marginal cardinality reward at mid-range k should match the
        // typical cost of adding one frame.
        alpha = med / (params.rho * std::exp(-params.rho * 0.5 * t));
    }

    SubsampleResult result;
    result.alpha_used = alpha;

    SubsetOutcome best;
    double best_ek = 0.0;
    ImageGrid warm;
    for (int k = k_lo; k <= k_hi; ++k) {
        SubsetOutcome cur = best_subset_of_size(frames, sharp, k, params,
                                                k == k_lo ? nullptr : &warm);
        double card = alpha * (1.0 - std::exp(-params.rho * k));
        double eq = cur.eq_trace.back();
        double ek = card - eq;
        result.energy_curve.push_back({k, card, eq, ek});
        bool take = result.k_star == 0 || ek > best_ek;
        if (all_identical) take = (k == k_hi);  // degenerate: keep everything
        if (take) {
            best_ek = ek;
            result.k_star = k;
            best = cur;
        }
        warm = std::move(cur.reference);
    }
    if (all_identical) result.note = "all frames identical; kept the largest candidate size";

    result.indices = std::move(best.indices);
    result.eq_trace = std::move(best.eq_trace);
    result.reference = temporal_mean(frames, result.indices);
    log_info("subsample: k*=" + std::to_string(result.k_star) + " of " +
             std::to_string(t) + " frames");
    return result;
}

void write_energy_curve_csv(const std::string& path,
                            const std::vector<EnergyCurveRow>& curve) {
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> rows;
    rows.reserve(curve.size());
    for (const EnergyCurveRow& r : curve)
        rows.push_back({std::to_string(r.k), fmt(r.cardinality), fmt(r.e_q), fmt(r.e_k)});
    write_csv(path, {"k", "cardinality_term", "e_q", "e_k"}, rows);
}

} // namespace turbi
