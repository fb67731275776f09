#pragma once

#include <string>
#include <vector>

#include "turbi/image.hpp"

namespace turbi {

struct SubsampleParams {
    double lambda_samp = 200.0;  // weight of the (1 - sharpness) penalty
    double rho = 0.1;            // cardinality saturation rate
    double alpha = 0.0;          // cardinality weight; 0 = auto-balance
    double eps_energy = 0.0;     // alternation stopping gap; 0 = 1e-6 * pixels
    int k_min = 2;
    int k_max = 0;               // 0 = frame count
    int max_alternations = 100;
    int threads = 1;
};

struct EnergyCurveRow {
    int k = 0;
    double cardinality = 0.0;  // alpha * (1 - exp(-rho * k))
    double e_q = 0.0;          // converged quality energy for this k
    double e_k = 0.0;          // cardinality - e_q
};

struct SubsampleResult {
    std::vector<int> indices;  // selected frames, ascending
    ImageGrid reference;       // temporal mean of the selected frames
    std::vector<EnergyCurveRow> energy_curve;
    std::vector<double> eq_trace;  // per-iteration quality energy at k*
    int k_star = 0;
    double alpha_used = 0.0;
    std::string note;  // non-empty for degenerate inputs
};

struct SubsetOutcome {
    std::vector<int> indices;
    ImageGrid reference;
    std::vector<double> eq_trace;
};

// Sum of |laplacian|; the un-normalized sharpness score of one frame.
double sharpness_raw(const ImageGrid& image);

// Raw scores mapped affinely so the sequence minimum is 0 and the maximum
// is 1. A sequence of equal scores maps everything to 0.
std::vector<double> normalized_sharpness(const std::vector<ImageGrid>& frames,
                                         int threads = 1);

// Sum over the window of (reference - frame)^2 plus
// lambda * (1 - sharpness); the per-frame term of the quality energy.
double frame_energy(const ImageGrid& reference, const ImageGrid& frame,
                    double sharpness, double lambda_samp);

// Mean frame_energy over the index set. Rejects an empty set.
double quality_energy(const ImageGrid& reference, const std::vector<int>& indices,
                      const std::vector<ImageGrid>& frames,
                      const std::vector<double>& sharpness, double lambda_samp);

// Pixel-wise arithmetic mean of the indexed frames, accumulated in
// ascending index order so repeated calls are bit-identical.
ImageGrid temporal_mean(const std::vector<ImageGrid>& frames,
                        const std::vector<int>& indices);
ImageGrid temporal_mean(const std::vector<ImageGrid>& frames);

// Alternating minimization for a fixed subset size: pick the k frames with
// the smallest energy against the current reference, then replace the
// reference by their mean, until the energy gap drops below eps. Starts
// from the k sharpest frames, or from warm_reference when given. The
// returned trace is non-increasing.
SubsetOutcome best_subset_of_size(const std::vector<ImageGrid>& frames,
                                  const std::vector<double>& sharpness, int k,
                                  const SubsampleParams& params,
                                  const ImageGrid* warm_reference = nullptr);

// Sweeps every candidate size, scores each converged subset by
// cardinality reward minus quality energy, and keeps the maximum.
SubsampleResult subsample(const std::vector<ImageGrid>& frames,
                          const SubsampleParams& params = {});

void write_energy_curve_csv(const std::string& path,
                            const std::vector<EnergyCurveRow>& curve);

} // namespace turbi
