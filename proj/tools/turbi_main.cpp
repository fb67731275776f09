// Command-line front end: each pipeline stage as a subcommand plus the
// end-to-end run, the comparison baselines, the simulator and the metric
// report. Configuration comes from a flat key = value file; --seed,
// --threads, --emit-intermediates and --stage-toggle override it.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "turbi/common.hpp"
#include "turbi/image_io.hpp"
#include "turbi/pipeline.hpp"

using namespace turbi;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool emit = false;
    std::vector<std::string> toggles;
};

void apply_toggle(PipelineConfig& config, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("--stage-toggle wants NAME=on|off, got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    bool on = false;
    if (value == "on")
        on = true;
    else if (value == "off")
        on = false;
    else
        throw std::invalid_argument("--stage-toggle " + name + ": want on or off");

    if (name == "subsample")
        config.enable_subsample = on;
    else if (name == "stabilize")
        config.enable_stabilize = on;
    else if (name == "absorb")
        config.enable_absorb = on;
    else if (name == "register")
        config.enable_register = on;
    else if (name == "deblur")
        config.enable_deblur = on;
    else if (name == "fusion")
        config.enable_fusion = on;
    else
        throw std::invalid_argument("--stage-toggle: unknown stage '" + name + "'");
}

PipelineConfig make_config(const GlobalOpts& g) {
    PipelineConfig config = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
    if (g.seed_set) config.seed = g.seed;
    if (g.threads > 0) config.threads = g.threads;
    if (g.emit) config.emit_intermediates = true;
    for (const std::string& t : g.toggles) apply_toggle(config, t);
    return config;
}

void ensure_parent(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::string default_out(const PipelineConfig& config) {
    return config.output_dir.empty() ? std::string("out") : config.output_dir;
}

std::vector<int> read_indices(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open index file " + path);
    std::vector<int> indices;
    int v = 0;
    while (in >> v) indices.push_back(v);
    return indices;
}

void write_indices(const std::string& path, const std::vector<int>& indices) {
    std::string text;
    for (int v : indices) text += std::to_string(v) + "\n";
    write_text_file(path, text);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"turbulence-distorted video restoration"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "config file (flat key = value)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "override run seed")
        ->each([&g](const std::string&) { g.seed_set = true; });
    app.add_option("--threads", g.threads, "override thread count");
    app.add_flag("--emit-intermediates", g.emit, "write per-stage frames and images");
    app.add_option("--stage-toggle", g.toggles,
                   "enable/disable a run-all stage, NAME=on|off (repeatable)");

    // simulate
    std::string sim_truth, sim_out;
    int sim_frames = 30, sim_severe = 20;
    auto* sim = app.add_subcommand("simulate", "distort a sharp image into a test sequence");
    sim->add_option("--truth", sim_truth, "sharp source image")->required()->check(CLI::ExistingFile);
    sim->add_option("--frames", sim_frames, "frame count");
    sim->add_option("--severe", sim_severe, "how many frames draw severe strengths");
    sim->add_option("--output", sim_out, "bundle directory");
    sim->callback([&] {
        PipelineConfig config = make_config(g);
        TurbulenceParams params = config.turbsim;
        params.seed = config.seed;
        const std::string dir = sim_out.empty() ? default_out(config) : sim_out;
        GroundTruthBundle bundle =
            simulate(read_png(sim_truth), sim_frames, sim_severe, params, config.threads);
        save_bundle(dir, bundle);
        std::printf("wrote %d frames to %s\n", sim_frames, dir.c_str());
    });

    // subsample
    std::string sub_in, sub_out;
    auto* sub = app.add_subcommand("subsample", "select the sharp, consistent frame subset");
    sub->add_option("--input", sub_in, "frame directory");
    sub->add_option("--output", sub_out, "output directory");
    sub->callback([&] {
        PipelineConfig config = make_config(g);
        config.subsample.threads = config.threads;
        const std::string in = sub_in.empty() ? config.input_dir : sub_in;
        const std::string out = sub_out.empty() ? default_out(config) : sub_out;
        std::vector<ImageGrid> frames = read_frame_dir(in);
        SubsampleResult r = subsample(frames, config.subsample);
        std::filesystem::create_directories(out);
        write_energy_curve_csv(out + "/energy_curve.csv", r.energy_curve);
        write_png16(out + "/reference.png", r.reference);
        write_indices(out + "/selected.txt", r.indices);
        std::vector<ImageGrid> selected;
        for (int idx : r.indices) selected.push_back(frames[static_cast<std::size_t>(idx)]);
        write_frame_dir(out + "/selected", selected);
        std::printf("selected %d of %zu frames%s\n", r.k_star, frames.size(),
                    r.note.empty() ? "" : (" (" + r.note + ")").c_str());
    });

    // stabilize
    std::string stab_in, stab_out;
    auto* stab = app.add_subcommand("stabilize", "warp each frame toward the deformation centroid");
    stab->add_option("--input", stab_in, "frame directory");
    stab->add_option("--output", stab_out, "output directory");
    stab->callback([&] {
        PipelineConfig config = make_config(g);
        config.stabilize.threads = config.threads;
        const std::string in = stab_in.empty() ? config.input_dir : stab_in;
        const std::string out = stab_out.empty() ? default_out(config) : stab_out;
        StabilizeResult r = internal_stabilize(read_frame_dir(in), config.stabilize);
        write_frame_dir(out + "/internal", r.frames);
        write_stabilize_log_csv(out + "/stabilize_log.csv", r.log);
        std::printf("stabilized %zu frames to %s/internal\n", r.frames.size(), out.c_str());
    });

    // absorb
    std::string ab_in, ab_orig, ab_idx, ab_out;
    auto* ab = app.add_subcommand("absorb", "swap sharper originals into the stabilized set");
    ab->add_option("--input", ab_in, "stabilized frame directory")->required();
    ab->add_option("--original", ab_orig, "original frame directory");
    ab->add_option("--indices", ab_idx, "selected.txt from the subsample stage")->required();
    ab->add_option("--output", ab_out, "output directory");
    ab->callback([&] {
        PipelineConfig config = make_config(g);
        config.stabilize.threads = config.threads;
        const std::string orig = ab_orig.empty() ? config.input_dir : ab_orig;
        const std::string out = ab_out.empty() ? default_out(config) : ab_out;
        std::vector<ImageGrid> stabilized = read_frame_dir(ab_in);
        std::vector<ImageGrid> original = read_frame_dir(orig);
        std::vector<double> sharpness = normalized_sharpness(original, config.threads);
        StabilizeResult r = absorbing_stabilize(stabilized, original, sharpness,
                                                read_indices(ab_idx), config.stabilize);
        write_frame_dir(out + "/absorbed", r.frames);
        write_stabilize_log_csv(out + "/stabilize_log.csv", r.log);
        std::printf("absorbed set of %zu frames to %s/absorbed\n", r.frames.size(), out.c_str());
    });

    // register
    std::string reg_in, reg_ref, reg_out;
    auto* reg = app.add_subcommand("register", "align every frame to the reference");
    reg->add_option("--input", reg_in, "frame directory");
    reg->add_option("--reference", reg_ref, "reference image (default: temporal mean)");
    reg->add_option("--output", reg_out, "output directory");
    reg->callback([&] {
        PipelineConfig config = make_config(g);
        config.stabilize.threads = config.threads;
        const std::string in = reg_in.empty() ? config.input_dir : reg_in;
        const std::string out = reg_out.empty() ? default_out(config) : reg_out;
        std::vector<ImageGrid> frames = read_frame_dir(in);
        ImageGrid reference = reg_ref.empty() ? temporal_mean(frames) : read_png(reg_ref);
        StabilizeResult r = register_to_reference(frames, reference, config.stabilize);
        write_frame_dir(out + "/registered", r.frames);
        write_stabilize_log_csv(out + "/stabilize_log.csv", r.log);
        std::printf("registered %zu frames to %s/registered\n", r.frames.size(), out.c_str());
    });

    // fuse
    std::string fuse_in, fuse_deblurred, fuse_out;
    auto* fu = app.add_subcommand("fuse", "low-rank/sparse split plus detail fusion");
    fu->add_option("--input", fuse_in, "registered frame directory");
    fu->add_option("--deblurred", fuse_deblurred,
                   "deblurred low-rank image (default: fuse onto the raw split)");
    fu->add_option("--output", fuse_out, "output directory");
    fu->callback([&] {
        PipelineConfig config = make_config(g);
        config.fusion.threads = config.threads;
        const std::string in = fuse_in.empty() ? config.input_dir : fuse_in;
        const std::string out = fuse_out.empty() ? default_out(config) : fuse_out;
        std::vector<ImageGrid> frames = read_frame_dir(in);
        LowRankSplit split = lowrank_split(frames, config.fusion.rpca);
        ImageGrid lowrank = split.lowrank;
        for (double& v : lowrank.data) v = clamp01(v);
        std::filesystem::create_directories(out);
        write_png16(out + "/lowrank.png", lowrank);
        ImageGrid base = fuse_deblurred.empty() ? lowrank : read_png(fuse_deblurred);
        DetailLayer detail = build_detail(split.sparse, config.fusion);
        ImageGrid final_image = fuse(base, detail, config.fusion.beta);
        write_png16(out + "/final.png", final_image);
        std::printf("wrote %s/final.png\n", out.c_str());
    });

    // deblur
    std::string deb_in, deb_out, deb_kernel;
    auto* deb = app.add_subcommand("deblur", "blind deconvolution of a single image");
    deb->add_option("--input", deb_in, "blurred image")->required()->check(CLI::ExistingFile);
    deb->add_option("--output", deb_out, "restored image path");
    deb->add_option("--kernel-out", deb_kernel, "write the estimated kernel image here");
    deb->callback([&] {
        PipelineConfig config = make_config(g);
        const std::string out =
            deb_out.empty() ? default_out(config) + "/deblurred.png" : deb_out;
        DeblurResult r = blind_deconvolve(read_png(deb_in), config.deblur);
        ensure_parent(out);
        write_png16(out, r.image);
        if (!deb_kernel.empty()) {
            ensure_parent(deb_kernel);
            write_png16(deb_kernel, kernel_image(r.kernel));
        }
        std::printf("objective %.2f -> %.2f over %d outer iterations%s, wrote %s\n",
                    r.objective_trace.front(), r.objective_trace.back(), r.outer_completed,
                    r.diverged ? " (stopped early)" : "", out.c_str());
    });

    // run-all
    std::string ra_in, ra_out;
    auto* ra = app.add_subcommand("run-all", "the full restoration chain");
    ra->add_option("--input", ra_in, "frame directory (overrides config)");
    ra->add_option("--output", ra_out, "output directory (overrides config)");
    ra->callback([&] {
        PipelineConfig config = make_config(g);
        if (!ra_in.empty()) config.input_dir = ra_in;
        if (!ra_out.empty()) config.output_dir = ra_out;
        if (config.output_dir.empty()) config.output_dir = "out";
        PipelineResult r = run_all(config);
        std::printf("wrote %s (config hash %016llx)\n", r.manifest.final_path.c_str(),
                    static_cast<unsigned long long>(r.manifest.config_hash));
    });

    // baselines
    std::string cen_in, cen_out;
    auto* cen = app.add_subcommand("baseline-centroid",
                                   "mean-of-flows warp + temporal mean comparison arm");
    cen->add_option("--input", cen_in, "frame directory");
    cen->add_option("--output", cen_out, "output image path");
    cen->callback([&] {
        PipelineConfig config = make_config(g);
        config.stabilize.threads = config.threads;
        const std::string in = cen_in.empty() ? config.input_dir : cen_in;
        const std::string out =
            cen_out.empty() ? default_out(config) + "/centroid.png" : cen_out;
        ImageGrid img = centroid_baseline(read_frame_dir(in), config.stabilize);
        ensure_parent(out);
        write_png16(out, img);
        std::printf("wrote %s\n", out.c_str());
    });

    std::string mean_in, mean_out;
    auto* mn = app.add_subcommand("baseline-mean", "plain temporal mean comparison arm");
    mn->add_option("--input", mean_in, "frame directory");
    mn->add_option("--output", mean_out, "output image path");
    mn->callback([&] {
        PipelineConfig config = make_config(g);
        const std::string in = mean_in.empty() ? config.input_dir : mean_in;
        const std::string out =
            mean_out.empty() ? default_out(config) + "/mean.png" : mean_out;
        ImageGrid img = temporal_mean(read_frame_dir(in));
        ensure_parent(out);
        write_png16(out, img);
        std::printf("wrote %s\n", out.c_str());
    });

    // config
    auto* cfg = app.add_subcommand(
        "config", "print the effective configuration (defaults + overrides)");
    cfg->callback([&] { std::fputs(serialize_config(make_config(g)).c_str(), stdout); });

    // evaluate
    std::string ev_restored, ev_truth, ev_csv, ev_label;
    auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM of a restored image against truth");
    ev->add_option("--restored", ev_restored, "restored image")->required()->check(CLI::ExistingFile);
    ev->add_option("--truth", ev_truth, "ground truth image")->required()->check(CLI::ExistingFile);
    ev->add_option("--csv", ev_csv, "metrics CSV to append to");
    ev->add_option("--label", ev_label, "row label in the CSV");
    ev->callback([&] {
        PipelineConfig config = make_config(g);
        const std::string csv =
            ev_csv.empty() ? default_out(config) + "/metrics.csv" : ev_csv;
        const std::string label = ev_label.empty() ? ev_restored : ev_label;
        ensure_parent(csv);
        QualityReport report = evaluate(read_png(ev_restored), read_png(ev_truth), csv, label);
        std::printf("psnr=%.4f ssim=%.4f (appended to %s)\n", report.psnr, report.ssim,
                    csv.c_str());
    });

    // Let global options (--config, --seed, ...) appear after the
    // subcommand name, where people naturally type them.
    for (CLI::App* s : {sim, sub, stab, ab, reg, fu, deb, ra, cen, mn, cfg, ev})
        s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
