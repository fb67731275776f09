// Acceptance gate for the restoration pipeline. Each check prints exactly
// one PASS/FAIL line with the quantities it measured; the exit code is the
// number of failed checks. Optional arguments: a path to the CLI binary
// (defaults to ./turbi next to this executable) and check ids such as A2
// to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "test_util.hpp"
#include "turbi/deblur.hpp"
#include "turbi/fusion.hpp"
#include "turbi/image_io.hpp"
#include "turbi/optflow.hpp"
#include "turbi/pipeline.hpp"
#include "turbi/quasiconformal.hpp"
#include "turbi/rpca.hpp"
#include "turbi/stabilize.hpp"
#include "turbi/subsample.hpp"
#include "turbi/turbsim.hpp"

using namespace turbi;
using turbi_test::make_scene;
using turbi_test::make_smooth_field;
using turbi_test::remove_mean;

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1e", v);
    return buf;
}

// ---- fixture builders ----------------------------------------------------

Matrix low_rank_matrix(int m, int n, int r, std::uint64_t seed) {
    Rng rng(seed);
    Matrix A(m, r), B(r, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < r; ++j) A(i, j) = rng.normal();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
    return A * B;
}

Matrix spike_matrix(int m, int n, double fraction, double amplitude, std::uint64_t seed) {
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

// Smooth field tapered to zero near the border, so Dirichlet data stays benign.
VectorField tapered_field(int w, int h, std::uint64_t seed, double peak,
                          double sigma = 0.0) {
    VectorField f = make_smooth_field(w, h, seed, peak, sigma);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double tx = std::min(x, w - 1 - x) / (0.25 * w);
            double ty = std::min(y, h - 1 - y) / (0.25 * h);
            double t = std::min({1.0, tx, ty});
            std::size_t i = static_cast<std::size_t>(y) * w + x;
            f.dx[i] *= t;
            f.dy[i] *= t;
        }
    return f;
}

VectorField plain_mean_field(const std::vector<VectorField>& fields) {
    VectorField m(fields[0].width, fields[0].height);
    for (const VectorField& f : fields)
        for (std::size_t i = 0; i < m.size(); ++i) {
            m.dx[i] += f.dx[i];
            m.dy[i] += f.dy[i];
        }
    double inv = 1.0 / static_cast<double>(fields.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.dx[i] *= inv;
        m.dy[i] *= inv;
    }
    return m;
}

double field_l2(const VectorField& a, const VectorField& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double ex = a.dx[i] - b.dx[i], ey = a.dy[i] - b.dy[i];
        s += ex * ex + ey * ey;
    }
    return std::sqrt(s);
}

ImageGrid crop_window(const ImageGrid& big, double x0, double y0, int w, int h) {
    ImageGrid out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(x, y) = sample_bilinear(big, x0 + x, y0 + y);
    return out;
}

double interior_epe(const VectorField& est, double tx, double ty, double frac = 0.8) {
    int bx = static_cast<int>(est.width * (1.0 - frac) / 2.0);
    int by = static_cast<int>(est.height * (1.0 - frac) / 2.0);
    double s = 0.0;
    std::size_t c = 0;
    for (int y = by; y < est.height - by; ++y)
        for (int x = bx; x < est.width - bx; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * est.width + x;
            s += std::hypot(est.dx[i] - tx, est.dy[i] - ty);
            ++c;
        }
    return s / static_cast<double>(c);
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string manifest_hash_line(const std::string& manifest) {
    std::istringstream in(manifest);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("config_hash", 0) == 0) return line;
    return {};
}

// ---- checks ----------------------------------------------------------------

struct Check {
    std::string id;
    std::string title;
    std::function<bool(std::string&)> run;
};

bool check_rpca_recovery(std::string& detail) {
    Matrix L0 = low_rank_matrix(200, 50, 2, 7);
    Matrix S0 = spike_matrix(200, 50, 0.05, 1.0, 8);
    Matrix R = L0 + S0;
    const double t0 = now_seconds();
    RpcaResult res = rpca(R);
    const double dt = now_seconds() - t0;
    const double rel = (res.L - L0).norm() / L0.norm();
    detail = "relative error " + fmt_sci(rel) + " (bound 1e-4), " + fmt(dt) +
             " s (bound 5 s), converged=" + (res.converged ? "yes" : "no");
    return res.converged && rel < 1e-4 && dt < 5.0;
}

bool check_end_to_end(std::string& detail) {
    const int frames_per_bundle = 30;
    const int severe = 20;
    int wins_centroid = 0, wins_mean = 0;
    double worst_seconds = 0.0;
    std::string per_seed;

    for (std::uint64_t s = 1; s <= 5; ++s) {
        ImageGrid truth = make_scene(128, 128, 400 + s);
        TurbulenceParams tp;
        tp.seed = 1000 + s;
        GroundTruthBundle bundle =
            simulate(truth, frames_per_bundle, severe, tp, 1);

        PipelineConfig config;
        config.threads = static_cast<int>(
            std::min(8u, std::max(1u, std::thread::hardware_concurrency())));

        const double t0 = now_seconds();
        PipelineResult run = run_pipeline(bundle.frames, config);
        const double dt = now_seconds() - t0;
        worst_seconds = std::max(worst_seconds, dt);

        StabilizeParams sp = config.stabilize;
        sp.threads = config.threads;
        ImageGrid centroid = centroid_baseline(bundle.frames, sp);
        ImageGrid mean = temporal_mean(bundle.frames);

        const double p_pipe = psnr(run.final_image, truth);
        const double p_cen = psnr(centroid, truth);
        const double p_mean = psnr(mean, truth);
        wins_centroid += p_pipe > p_cen ? 1 : 0;
        wins_mean += p_pipe > p_mean ? 1 : 0;
        per_seed += " [seed " + std::to_string(s) + ": " + fmt(p_pipe, 2) + "/" +
                    fmt(p_cen, 2) + "/" + fmt(p_mean, 2) + " dB, " +
                    fmt(dt, 0) + " s]";
    }

    detail = "beats centroid " + std::to_string(wins_centroid) +
             "/5 (need 4), beats mean " + std::to_string(wins_mean) +
             "/5 (need 5), slowest bundle " + fmt(worst_seconds, 0) +
             " s (bound 900);" + per_seed;
    return wins_centroid >= 4 && wins_mean == 5 && worst_seconds < 900.0;
}

bool check_lbs(std::string& detail) {
    // Zero coefficient with identity boundary.
    BeltramiField zero(32, 32);
    LbsResult identity = lbs_solve(zero);
    double id_err = 0.0;
    for (std::size_t i = 0; i < identity.field.size(); ++i)
        id_err = std::max({id_err, std::fabs(identity.field.dx[i]),
                           std::fabs(identity.field.dy[i])});

    // Constant real coefficient c: the map z + c zbar, i.e. dx = c x, dy = -c y.
    const int n = 32;
    const double c = 0.2;
    BeltramiField constant(n, n);
    for (auto& v : constant.mu) v = {c, 0.0};
    VectorField affine(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            affine.dx[static_cast<std::size_t>(y) * n + x] = c * x;
            affine.dy[static_cast<std::size_t>(y) * n + x] = -c * y;
        }
    LbsResult recon = lbs_solve(constant, &affine);
    double affine_err = 0.0;
    for (std::size_t i = 0; i < affine.size(); ++i)
        affine_err = std::max({affine_err, std::fabs(recon.field.dx[i] - affine.dx[i]),
                               std::fabs(recon.field.dy[i] - affine.dy[i])});

    // Round trip coefficient -> map -> coefficient on a 64x64 smooth field.
    const int m = 64;
    VectorField f0 = make_smooth_field(m, m, 77, 3.0);
    for (int tries = 0; tries < 40; ++tries) {
        double sup = beltrami_from_field(f0).sup_magnitude();
        if (sup < 0.5) break;
        double scale = 0.9 * 0.5 / sup;
        for (auto& v : f0.dx) v *= scale;
        for (auto& v : f0.dy) v *= scale;
    }
    BeltramiField mu0 = beltrami_from_field(f0);
    LbsResult round = lbs_solve(mu0, &f0);
    BeltramiField mu1 = beltrami_from_field(round.field);
    double se = 0.0;
    std::size_t count = 0;
    for (int y = 1; y + 1 < m; ++y)
        for (int x = 1; x + 1 < m; ++x) {
            se += std::norm(mu1.at(x, y) - mu0.at(x, y));
            ++count;
        }
    const double rmse = std::sqrt(se / static_cast<double>(count));

    detail = "identity max err " + fmt_sci(id_err) + " (bound 1e-8), constant-mu max err " +
             fmt_sci(affine_err) + " (bound 1e-6), round-trip mu RMSE " + fmt_sci(rmse) +
             " (bound 1e-3)";
    return identity.converged && recon.converged && round.converged &&
           id_err < 1e-8 && affine_err < 1e-6 && rmse < 1e-3;
}

bool check_fold_free(std::string& detail) {
    StabilizeParams params;
    int positive = 0;
    double worst = 1e30;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        // Blob-scale fields overdriven until the raw coefficient leaves the
        // unit disc somewhere.
        double peak = 14.0;
        VectorField f = tapered_field(48, 48, 5000 + seed, peak, 3.0);
        for (int tries = 0;
             tries < 8 && beltrami_from_field(f).sup_magnitude() <= 1.0; ++tries) {
            peak *= 1.5;
            f = tapered_field(48, 48, 5000 + seed, peak, 3.0);
        }
        if (beltrami_from_field(f).sup_magnitude() <= 1.0) {
            detail = "fixture " + std::to_string(seed) + " never exceeded |mu| = 1";
            return false;
        }
        VectorField out = fold_free_warp_field(f, params);
        const double jmin = min_interior_jacobian(out);
        worst = std::min(worst, jmin);
        positive += jmin > 0.0 ? 1 : 0;
    }
    detail = "positive interior Jacobian " + std::to_string(positive) +
             "/100 (need 100), smallest determinant " + fmt_sci(worst);
    return positive == 100;
}

bool check_subsample_monotone(std::string& detail) {
    int trace_violations = 0;
    int reference_mismatches = 0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(9000 + trial);
        const int t = 4 + static_cast<int>(rng.uniform_index(6));
        std::vector<ImageGrid> frames;
        for (int i = 0; i < t; ++i) {
            ImageGrid f = make_scene(16, 12, 100 + trial);
            const double blur = rng.uniform(0.0, 1.5);
            if (blur > 0.1) f = gaussian_blur(f, blur);
            for (double& v : f.data) v = clamp01(v + rng.normal() * 0.05);
            frames.push_back(std::move(f));
        }
        std::vector<double> sharp = normalized_sharpness(frames);
        const int k = 2 + static_cast<int>(rng.uniform_index(t - 1));
        SubsetOutcome out = best_subset_of_size(frames, sharp, k, SubsampleParams{});
        for (std::size_t i = 1; i < out.eq_trace.size(); ++i)
            if (out.eq_trace[i] > out.eq_trace[i - 1]) ++trace_violations;

        SubsampleResult r = subsample(frames, SubsampleParams{});
        ImageGrid mean = temporal_mean(frames, r.indices);
        if (r.reference.data != mean.data) ++reference_mismatches;
    }
    detail = "trace violations " + std::to_string(trace_violations) +
             " (need 0), reference vs selection mean bit mismatches " +
             std::to_string(reference_mismatches) + " (need 0)";
    return trace_violations == 0 && reference_mismatches == 0;
}

bool check_composed_identity(std::string& detail) {
    const int w = 64, h = 64, t = 8;
    int ok = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ImageGrid truth = make_scene(w, h, 600 + seed);
        std::vector<VectorField> fields;
        for (int i = 0; i < t; ++i)
            fields.push_back(tapered_field(w, h, seed * 100 + i, 1.6));
        remove_mean(fields);
        std::vector<ImageGrid> frames;
        for (int i = 0; i < t; ++i) frames.push_back(warp(truth, fields[i]));

        StabilizeResult r = internal_stabilize(frames, StabilizeParams{});

        double dev_sum = 0.0;
        int count = 0;
        ImageGrid mx(w, h), my(w, h);
        for (int i = 0; i < t; ++i) {
            for (std::size_t p = 0; p < mx.size(); ++p) {
                mx.data[p] = r.fields[i].dx[p];
                my.data[p] = r.fields[i].dy[p];
            }
            for (int y = 6; y < h - 6; ++y)
                for (int x = 6; x < w - 6; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * w + x;
                    double qx = x + fields[i].dx[p], qy = y + fields[i].dy[p];
                    double ex = fields[i].dx[p] + sample_bilinear(mx, qx, qy);
                    double ey = fields[i].dy[p] + sample_bilinear(my, qx, qy);
                    dev_sum += std::hypot(ex, ey);
                    ++count;
                }
        }
        const double dev = dev_sum / count;
        worst = std::max(worst, dev);
        ok += dev < 0.5 ? 1 : 0;
    }
    detail = "mean composed deviation under 0.5 px on " + std::to_string(ok) +
             "/20 seeds (need 20), worst " + fmt(worst, 3) + " px";
    return ok == 20;
}

bool check_outlier_rejection(std::string& detail) {
    StabilizeParams params;
    int closer = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<VectorField> columns;
        for (int j = 0; j < 9; ++j) {
            VectorField f = make_smooth_field(28, 24, 7000 + seed, 1.0);
            VectorField jitter = make_smooth_field(28, 24, 7100 + seed * 10 + j, 0.02);
            for (std::size_t i = 0; i < f.size(); ++i) {
                f.dx[i] += jitter.dx[i];
                f.dy[i] += jitter.dy[i];
            }
            columns.push_back(std::move(f));
        }
        std::vector<VectorField> inliers = columns;
        columns.push_back(make_smooth_field(28, 24, 7900 + seed, 6.0));

        StabilizingFieldInfo info = stabilizing_field(columns, params);
        VectorField inlier_mean = plain_mean_field(inliers);
        VectorField raw_mean = plain_mean_field(columns);
        if (field_l2(info.field, inlier_mean) < field_l2(raw_mean, inlier_mean))
            ++closer;
    }

    // Patternless iid noise: the sparse part stays dense, so the exact
    // column-mean fallback has to take over.
    std::vector<VectorField> noise;
    Rng rng(321);
    for (int j = 0; j < 6; ++j) {
        VectorField f(20, 18);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.dx[i] = rng.normal();
            f.dy[i] = rng.normal();
        }
        noise.push_back(std::move(f));
    }
    StabilizingFieldInfo fallback = stabilizing_field(noise, params);
    VectorField oracle = plain_mean_field(noise);
    const bool fallback_taken = fallback.branch_x == 0 && fallback.branch_y == 0 &&
                                fallback.field.dx == oracle.dx &&
                                fallback.field.dy == oracle.dy;

    detail = "filtered mean closer to inlier mean on " + std::to_string(closer) +
             "/20 seeds (need 20), iid fallback " +
             (fallback_taken ? "taken with bit-exact mean" : "NOT taken");
    return closer == 20 && fallback_taken;
}

bool check_detail_bound(std::string& detail) {
    int bound_violations = 0;
    int reference_overshoots = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(800 + seed);
        std::vector<SelectedPatch> patches;
        double sup = 0.0;
        for (int i = 0; i < 40; ++i) {
            SelectedPatch p;
            p.x0 = static_cast<int>(rng.uniform_index(20));
            p.y0 = static_cast<int>(rng.uniform_index(20));
            p.x1 = p.x0 + 4;
            p.y1 = p.y0 + 4;
            p.values = ImageGrid(5, 5);
            for (double& v : p.values.data) v = rng.normal() * 0.4;
            for (double v : p.values.data) sup = std::max(sup, std::abs(v));
            patches.push_back(std::move(p));
        }
        DetailLayer layer = detail_layer(patches, 25, 25);

        double merged_sup = 0.0;
        ImageGrid summed(25, 25, 0.0);
        for (const auto& p : patches)
            for (int y = p.y0; y <= p.y1; ++y)
                for (int x = p.x0; x <= p.x1; ++x)
                    summed.at(x, y) += p.values.at(x - p.x0, y - p.y0);
        double summed_sup = 0.0;
        for (std::size_t i = 0; i < layer.values.size(); ++i) {
            merged_sup = std::max(merged_sup, std::abs(layer.values.data[i]));
            summed_sup = std::max(summed_sup, std::abs(summed.data[i]));
        }
        if (merged_sup > sup + 1e-15) ++bound_violations;
        if (summed_sup > sup) ++reference_overshoots;
    }
    detail = "detail layer bound violations " + std::to_string(bound_violations) +
             "/20 (need 0), additive reference overshoots on " +
             std::to_string(reference_overshoots) + "/20 fixtures (need 20)";
    return bound_violations == 0 && reference_overshoots == 20;
}

bool check_deblur_gain(std::string& detail) {
    ImageGrid truth = make_scene(96, 96, 77);
    BlurKernel h(5);
    const double sigma = 1.8;
    double sum = 0.0;
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i) {
            const double dx = i - 2, dy = j - 2;
            h.at(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += h.at(i, j);
        }
    for (double& wgt : h.weights) wgt /= sum;
    ImageGrid blurred = convolve_replicate(truth, h);
    for (double& v : blurred.data) v = clamp01(v);

    DeblurParams params;
    params.kernel_size = 5;
    DeblurResult res = blind_deconvolve(blurred, params);

    const double before = psnr(blurred, truth);
    const double after = psnr(res.image, truth);
    int increases = 0;
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
        if (res.objective_trace[i] >
            res.objective_trace[i - 1] + 1e-9 * std::abs(res.objective_trace[i - 1]))
            ++increases;

    detail = "PSNR " + fmt(before, 2) + " -> " + fmt(after, 2) + " dB (gain " +
             fmt(after - before, 2) + ", need >= 2), objective increases " +
             std::to_string(increases) + " (need 0)";
    return after - before >= 2.0 && increases == 0;
}

bool check_flow_accuracy(std::string& detail) {
    // Integer translation: content moved by (+2, +1), borders never touched.
    const int n = 96;
    ImageGrid big = make_scene(n + 16, n + 16, 2);
    ImageGrid to = crop_window(big, 8, 8, n, n);
    ImageGrid from = crop_window(big, 6, 7, n, n);
    VectorField wt = flow(from, to);
    const double translation_epe = interior_epe(wt, 2.0, 1.0);

    // Half-degree rotation about the center against the analytic field.
    const double theta = 0.5 * M_PI / 180.0;
    ImageGrid big2 = make_scene(n + 32, n + 32, 3);
    ImageGrid to2 = crop_window(big2, 16, 16, n, n);
    const double cx = (n - 1) / 2.0, cy = (n - 1) / 2.0;
    ImageGrid from2(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double rx = std::cos(theta) * (x - cx) - std::sin(theta) * (y - cy);
            double ry = std::sin(theta) * (x - cx) + std::cos(theta) * (y - cy);
            from2.at(x, y) = sample_bilinear(big2, 16 + cx + rx, 16 + cy + ry);
        }
    VectorField wr = flow(from2, to2);
    double s = 0.0;
    std::size_t c = 0;
    const int b = n / 10;
    for (int y = b; y < n - b; ++y)
        for (int x = b; x < n - b; ++x) {
            double tx = std::cos(theta) * (x - cx) + std::sin(theta) * (y - cy) + cx - x;
            double ty = -std::sin(theta) * (x - cx) + std::cos(theta) * (y - cy) + cy - y;
            std::size_t i = static_cast<std::size_t>(y) * n + x;
            s += std::hypot(wr.dx[i] - tx, wr.dy[i] - ty);
            ++c;
        }
    const double rotation_epe = s / static_cast<double>(c);

    detail = "translation EPE " + fmt(translation_epe, 3) +
             " px (bound 0.25), rotation EPE " + fmt(rotation_epe, 3) +
             " px (bound 0.3)";
    return translation_epe < 0.25 && rotation_epe < 0.3;
}

bool check_determinism(const std::string& cli, std::string& detail) {
    const fs::path dir = fs::temp_directory_path() / "turbi_acceptance_runall";
    fs::remove_all(dir);
    fs::create_directories(dir);

    ImageGrid truth = make_scene(64, 64, 19);
    TurbulenceParams tp;
    tp.patch_size = 33;
    tp.seed = 23;
    GroundTruthBundle bundle = simulate(truth, 8, 5, tp, 1);
    write_frame_dir((dir / "frames").string(), bundle.frames);

    const std::string cmd = cli + " run-all --input " + (dir / "frames").string() +
                            " --output " + (dir / "out").string() + " --seed 7";
    if (std::system((cmd + " > " + (dir / "run1.log").string() + " 2>&1").c_str()) != 0) {
        detail = "first run failed: " + cmd;
        return false;
    }
    const std::string final1 = slurp_file((dir / "out" / "final.png").string());
    const std::string manifest1 = slurp_file((dir / "out" / "manifest.txt").string());
    if (std::system((cmd + " > " + (dir / "run2.log").string() + " 2>&1").c_str()) != 0) {
        detail = "second run failed: " + cmd;
        return false;
    }
    const std::string final2 = slurp_file((dir / "out" / "final.png").string());
    const std::string manifest2 = slurp_file((dir / "out" / "manifest.txt").string());

    const bool bytes_equal = !final1.empty() && final1 == final2;
    const std::string hash1 = manifest_hash_line(manifest1);
    const std::string hash2 = manifest_hash_line(manifest2);
    const bool hashes_match = !hash1.empty() && hash1 == hash2;
    detail = std::string("final.png bytes ") + (bytes_equal ? "identical" : "DIFFER") +
             " (" + std::to_string(final1.size()) + " bytes), manifest " +
             (hashes_match ? hash1 : "hash lines differ");
    return bytes_equal && hashes_match;
}

} // namespace

int main(int argc, char** argv) {
    std::string cli = "./turbi";
    std::vector<std::string> only;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.size() >= 2 && arg[0] == 'A' && std::isdigit(arg[1]))
            only.push_back(arg);
        else
            cli = arg;
    }

    std::vector<Check> checks = {
        {"A1", "rpca exact recovery", check_rpca_recovery},
        {"A2", "pipeline beats baselines on simulated bundles", check_end_to_end},
        {"A3", "beltrami solver identity, constant-mu and round trip", check_lbs},
        {"A4", "fold-free projection of overdriven fields", check_fold_free},
        {"A5", "subsample energy descent and reference identity", check_subsample_monotone},
        {"A6", "stabilizing warps compose to the identity", check_composed_identity},
        {"A7", "stabilizer outlier rejection and iid fallback", check_outlier_rejection},
        {"A8", "detail layer magnitude bound", check_detail_bound},
        {"A9", "blind deconvolution of a known gaussian blur", check_deblur_gain},
        {"A10", "flow accuracy on translation and rotation", check_flow_accuracy},
        {"A11", "repeated run-all is bit-identical",
         [&cli](std::string& d) { return check_determinism(cli, d); }},
    };

    int failures = 0;
    for (const Check& check : checks) {
        if (!only.empty() &&
            std::find(only.begin(), only.end(), check.id) == only.end())
            continue;
        std::string detail;
        bool pass = false;
        try {
            pass = check.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("%-4s %s  %s: %s\n", check.id.c_str(), pass ? "PASS" : "FAIL",
                    check.title.c_str(), detail.c_str());
        std::fflush(stdout);
        failures += pass ? 0 : 1;
    }
    return failures;
}
