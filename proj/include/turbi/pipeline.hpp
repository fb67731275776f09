#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "turbi/deblur.hpp"
#include "turbi/fusion.hpp"
#include "turbi/image.hpp"
#include "turbi/stabilize.hpp"
#include "turbi/subsample.hpp"
#include "turbi/turbsim.hpp"

namespace turbi {

// Everything a run needs, parsed from the flat `key = value` config text.
// Parameter invariants are checked by the stages themselves.
struct PipelineConfig {
    std::string input_dir;
    std::string output_dir;
    std::uint64_t seed = 1;
    int threads = 1;
    bool emit_intermediates = false;

    // Stage toggles for run_all. A disabled stage passes its input through.
    bool enable_subsample = true;
    bool enable_stabilize = true;
    bool enable_absorb = true;
    bool enable_register = true;
    bool enable_deblur = true;
    bool enable_fusion = true;

    SubsampleParams subsample;
    StabilizeParams stabilize;  // carries flow, rpca and lbs settings
    FusionParams fusion;
    DeblurParams deblur;
    TurbulenceParams turbsim;
};

// Parses the config format: `[section]` headers, `key = value` lines, `#`
// comments. Unknown sections or keys are errors (they are always typos).
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Canonical serialization: fixed key order, %.17g doubles. parse(serialize(c))
// round-trips, and the config hash is the FNV-1a of this text.
std::string serialize_config(const PipelineConfig& config);
std::uint64_t config_hash(const PipelineConfig& config);

struct StageRecord {
    std::string name;
    double seconds = 0.0;
    std::string output;  // primary artifact path, empty for in-memory runs
    std::string note;
};

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<StageRecord> stages;  // in execution order
    std::vector<std::pair<std::string, std::string>> metrics;
    std::string final_path;
};

std::string manifest_text(const RunManifest& manifest);
// Writes to a temp file in the same directory, then renames into place.
void write_manifest(const std::string& path, const RunManifest& manifest);

struct PipelineResult {
    ImageGrid final_image;
    ImageGrid lowrank;   // restored low-rank image before detail fusion
    BlurKernel kernel;   // estimated blur kernel (identity if deblur off)
    RunManifest manifest;
};

// Full chain on in-memory frames: subsample, internal stabilization,
// absorbing stabilization, registration to the reference, low-rank/sparse
// split, blind deconvolution of the low-rank image, detail fusion. Writes
// final.png and side artifacts when config.output_dir is set, and all
// intermediate frames when emit_intermediates is on. A stage failure
// throws std::runtime_error prefixed with the stage name after dropping a
// `run.partial` marker next to the outputs.
PipelineResult run_pipeline(const std::vector<ImageGrid>& frames,
                            const PipelineConfig& config);

// run_pipeline on frames loaded from config.input_dir; requires >= 2 frames.
PipelineResult run_all(const PipelineConfig& config);

// Comparison arm: warps every frame by the plain mean of its outgoing
// pairwise flows (no low-rank filtering, no fold-free projection) and
// returns the temporal mean of the warped frames.
ImageGrid centroid_baseline(const std::vector<ImageGrid>& frames,
                            const StabilizeParams& params);

// PSNR + SSIM of restored against truth; when csv_path is non-empty the
// pair is appended as `label,psnr,ssim` (header written on first use).
QualityReport evaluate(const ImageGrid& restored, const ImageGrid& truth,
                       const std::string& csv_path = "",
                       const std::string& label = "");

} // namespace turbi
