#include "turbi/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <utility>

#include "turbi/common.hpp"
#include "turbi/image_io.hpp"

namespace turbi {

namespace {

// Shortest decimal form that parses back to the same double, so serialized
// configs stay readable without losing round-trip exactness.
std::string fmt_double(double v) {
    char buf[48];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string fmt_fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fmt_hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad number '" + v + "'");
    return x;
}

int parse_int(const std::string& v) {
    std::size_t used = 0;
    long x = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
    return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& v) {
    std::size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
    return x;
}

bool parse_bool(const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument("bad flag '" + v + "' (want on/off)");
}

// One line of the config: canonical getter plus setter. The table is the
// single source of truth for parsing, serialization and hashing.
struct ConfigEntry {
    std::string key;  // section.name
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

using Entries = std::vector<ConfigEntry>;

template <typename Ref>
void add_double(Entries& t, const char* key, Ref ref) {
    t.push_back({key,
                 [ref](const PipelineConfig& c) {
                     return fmt_double(ref(const_cast<PipelineConfig&>(c)));
                 },
                 [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_double(v); }});
}

template <typename Ref>
void add_int(Entries& t, const char* key, Ref ref) {
    t.push_back({key,
                 [ref](const PipelineConfig& c) {
                     return std::to_string(ref(const_cast<PipelineConfig&>(c)));
                 },
                 [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_int(v); }});
}

template <typename Ref>
void add_bool(Entries& t, const char* key, Ref ref) {
    t.push_back({key,
                 [ref](const PipelineConfig& c) {
                     return ref(const_cast<PipelineConfig&>(c)) ? std::string("on")
                                                                : std::string("off");
                 },
                 [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_bool(v); }});
}

template <typename Ref>
void add_string(Entries& t, const char* key, Ref ref) {
    t.push_back({key,
                 [ref](const PipelineConfig& c) {
                     return ref(const_cast<PipelineConfig&>(c));
                 },
                 [ref](PipelineConfig& c, const std::string& v) { ref(c) = v; }});
}

const Entries& config_entries() {
    static const Entries table = [] {
        Entries t;
        add_string(t, "run.input_dir", [](PipelineConfig& c) -> std::string& { return c.input_dir; });
        add_string(t, "run.output_dir", [](PipelineConfig& c) -> std::string& { return c.output_dir; });
        t.push_back({"run.seed",
                     [](const PipelineConfig& c) { return std::to_string(c.seed); },
                     [](PipelineConfig& c, const std::string& v) { c.seed = parse_u64(v); }});
        add_int(t, "run.threads", [](PipelineConfig& c) -> int& { return c.threads; });
        add_bool(t, "run.emit_intermediates",
                 [](PipelineConfig& c) -> bool& { return c.emit_intermediates; });

        add_bool(t, "stages.subsample", [](PipelineConfig& c) -> bool& { return c.enable_subsample; });
        add_bool(t, "stages.stabilize", [](PipelineConfig& c) -> bool& { return c.enable_stabilize; });
        add_bool(t, "stages.absorb", [](PipelineConfig& c) -> bool& { return c.enable_absorb; });
        add_bool(t, "stages.register", [](PipelineConfig& c) -> bool& { return c.enable_register; });
        add_bool(t, "stages.deblur", [](PipelineConfig& c) -> bool& { return c.enable_deblur; });
        add_bool(t, "stages.fusion", [](PipelineConfig& c) -> bool& { return c.enable_fusion; });

        add_double(t, "subsample.lambda_samp", [](PipelineConfig& c) -> double& { return c.subsample.lambda_samp; });
        add_double(t, "subsample.rho", [](PipelineConfig& c) -> double& { return c.subsample.rho; });
        add_double(t, "subsample.alpha", [](PipelineConfig& c) -> double& { return c.subsample.alpha; });
        add_double(t, "subsample.eps_energy", [](PipelineConfig& c) -> double& { return c.subsample.eps_energy; });
        add_int(t, "subsample.k_min", [](PipelineConfig& c) -> int& { return c.subsample.k_min; });
        add_int(t, "subsample.k_max", [](PipelineConfig& c) -> int& { return c.subsample.k_max; });
        add_int(t, "subsample.max_alternations", [](PipelineConfig& c) -> int& { return c.subsample.max_alternations; });

        add_double(t, "flow.alpha", [](PipelineConfig& c) -> double& { return c.stabilize.flow.alpha; });
        add_double(t, "flow.gamma", [](PipelineConfig& c) -> double& { return c.stabilize.flow.gamma; });
        add_double(t, "flow.pyramid_factor", [](PipelineConfig& c) -> double& { return c.stabilize.flow.pyramid_factor; });
        add_int(t, "flow.levels", [](PipelineConfig& c) -> int& { return c.stabilize.flow.levels; });
        add_int(t, "flow.outer_iters", [](PipelineConfig& c) -> int& { return c.stabilize.flow.outer_iters; });
        add_int(t, "flow.inner_iters", [](PipelineConfig& c) -> int& { return c.stabilize.flow.inner_iters; });
        add_int(t, "flow.sor_iters", [](PipelineConfig& c) -> int& { return c.stabilize.flow.sor_iters; });
        add_double(t, "flow.sor_omega", [](PipelineConfig& c) -> double& { return c.stabilize.flow.sor_omega; });

        add_double(t, "stabilize.density_threshold_fraction", [](PipelineConfig& c) -> double& { return c.stabilize.density_threshold_fraction; });
        add_double(t, "stabilize.clamp_epsilon", [](PipelineConfig& c) -> double& { return c.stabilize.clamp_epsilon; });
        add_double(t, "stabilize.fold_shrink", [](PipelineConfig& c) -> double& { return c.stabilize.fold_shrink; });
        add_int(t, "stabilize.max_fold_retries", [](PipelineConfig& c) -> int& { return c.stabilize.max_fold_retries; });
        add_double(t, "stabilize.sparse_threshold", [](PipelineConfig& c) -> double& { return c.stabilize.sparse_threshold; });

        // One [rpca] section feeds both consumers (stabilizer columns and
        // the fusion split); the getter reads the stabilizer copy.
        auto rpca_d = [&t](const char* key, double RpcaParams::*m) {
            t.push_back({key,
                         [m](const PipelineConfig& c) { return fmt_double(c.stabilize.rpca.*m); },
                         [m](PipelineConfig& c, const std::string& v) {
                             const double x = parse_double(v);
                             c.stabilize.rpca.*m = x;
                             c.fusion.rpca.*m = x;
                         }});
        };
        auto rpca_i = [&t](const char* key, int RpcaParams::*m) {
            t.push_back({key,
                         [m](const PipelineConfig& c) { return std::to_string(c.stabilize.rpca.*m); },
                         [m](PipelineConfig& c, const std::string& v) {
                             const int x = parse_int(v);
                             c.stabilize.rpca.*m = x;
                             c.fusion.rpca.*m = x;
                         }});
        };
        rpca_d("rpca.lambda", &RpcaParams::lambda);
        rpca_d("rpca.tol", &RpcaParams::tol);
        rpca_i("rpca.max_outer", &RpcaParams::max_outer);
        rpca_i("rpca.max_inner", &RpcaParams::max_inner);
        rpca_d("rpca.mu0_scale", &RpcaParams::mu0_scale);
        rpca_d("rpca.rho_mu", &RpcaParams::rho_mu);
        rpca_i("rpca.full_svd_limit", &RpcaParams::full_svd_limit);

        add_double(t, "lbs.tol", [](PipelineConfig& c) -> double& { return c.stabilize.lbs.tol; });
        add_int(t, "lbs.max_iter_per_side", [](PipelineConfig& c) -> int& { return c.stabilize.lbs.max_iter_per_side; });

        add_int(t, "fusion.window", [](PipelineConfig& c) -> int& { return c.fusion.window; });
        add_double(t, "fusion.thresh", [](PipelineConfig& c) -> double& { return c.fusion.thresh; });
        add_int(t, "fusion.patch_size", [](PipelineConfig& c) -> int& { return c.fusion.patch_size; });
        add_double(t, "fusion.tau", [](PipelineConfig& c) -> double& { return c.fusion.tau; });
        add_double(t, "fusion.beta", [](PipelineConfig& c) -> double& { return c.fusion.beta; });
        add_int(t, "fusion.guided_radius", [](PipelineConfig& c) -> int& { return c.fusion.guided_radius; });
        add_double(t, "fusion.guided_eps", [](PipelineConfig& c) -> double& { return c.fusion.guided_eps; });

        add_int(t, "deblur.kernel_size", [](PipelineConfig& c) -> int& { return c.deblur.kernel_size; });
        add_int(t, "deblur.outer_iters", [](PipelineConfig& c) -> int& { return c.deblur.outer_iters; });
        add_double(t, "deblur.noise_level", [](PipelineConfig& c) -> double& { return c.deblur.noise_level; });
        add_double(t, "deblur.lambda1", [](PipelineConfig& c) -> double& { return c.deblur.lambda1; });
        add_double(t, "deblur.lambda2", [](PipelineConfig& c) -> double& { return c.deblur.lambda2; });
        // theta3 is pinned by continuity at the knee, so it is derived, not
        // a key; editing any of the three recomputes it.
        auto knee = [](PipelineConfig& c) {
            c.deblur.theta3 = c.deblur.theta1 * c.deblur.l_t -
                              c.deblur.theta2 * c.deblur.l_t * c.deblur.l_t;
        };
        t.push_back({"deblur.theta1",
                     [](const PipelineConfig& c) { return fmt_double(c.deblur.theta1); },
                     [knee](PipelineConfig& c, const std::string& v) {
                         c.deblur.theta1 = parse_double(v);
                         knee(c);
                     }});
        t.push_back({"deblur.theta2",
                     [](const PipelineConfig& c) { return fmt_double(c.deblur.theta2); },
                     [knee](PipelineConfig& c, const std::string& v) {
                         c.deblur.theta2 = parse_double(v);
                         knee(c);
                     }});
        t.push_back({"deblur.l_t",
                     [](const PipelineConfig& c) { return fmt_double(c.deblur.l_t); },
                     [knee](PipelineConfig& c, const std::string& v) {
                         c.deblur.l_t = parse_double(v);
                         knee(c);
                     }});
        add_int(t, "deblur.hq_stages", [](PipelineConfig& c) -> int& { return c.deblur.hq_stages; });
        add_double(t, "deblur.hq_tau0", [](PipelineConfig& c) -> double& { return c.deblur.hq_tau0; });
        add_double(t, "deblur.hq_tau_decay", [](PipelineConfig& c) -> double& { return c.deblur.hq_tau_decay; });
        add_int(t, "deblur.cg_iters", [](PipelineConfig& c) -> int& { return c.deblur.cg_iters; });
        add_double(t, "deblur.cg_tol", [](PipelineConfig& c) -> double& { return c.deblur.cg_tol; });
        add_int(t, "deblur.h_iters", [](PipelineConfig& c) -> int& { return c.deblur.h_iters; });
        add_double(t, "deblur.divergence_tol", [](PipelineConfig& c) -> double& { return c.deblur.divergence_tol; });

        add_int(t, "turbsim.patch_size", [](PipelineConfig& c) -> int& { return c.turbsim.patch_size; });
        add_int(t, "turbsim.positions_divisor", [](PipelineConfig& c) -> int& { return c.turbsim.positions_divisor; });
        add_double(t, "turbsim.strength_severe_lo", [](PipelineConfig& c) -> double& { return c.turbsim.strength_severe_lo; });
        add_double(t, "turbsim.strength_severe_hi", [](PipelineConfig& c) -> double& { return c.turbsim.strength_severe_hi; });
        add_double(t, "turbsim.strength_mild_lo", [](PipelineConfig& c) -> double& { return c.turbsim.strength_mild_lo; });
        add_double(t, "turbsim.strength_mild_hi", [](PipelineConfig& c) -> double& { return c.turbsim.strength_mild_hi; });
        add_double(t, "turbsim.blur_sigma", [](PipelineConfig& c) -> double& { return c.turbsim.blur_sigma; });
        add_double(t, "turbsim.blur_min_fraction", [](PipelineConfig& c) -> double& { return c.turbsim.blur_min_fraction; });
        add_double(t, "turbsim.noise_sigma", [](PipelineConfig& c) -> double& { return c.turbsim.noise_sigma; });
        add_bool(t, "turbsim.blur_before_warp", [](PipelineConfig& c) -> bool& { return c.turbsim.blur_before_warp; });
        return t;
    }();
    return table;
}

const ConfigEntry* find_entry(const std::string& key) {
    for (const ConfigEntry& e : config_entries())
        if (e.key == key) return &e;
    return nullptr;
}

} // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig config;
    std::string section;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string line = trim(text.substr(pos, nl == std::string::npos ? nl : nl - pos));
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        const ConfigEntry* entry = find_entry(full);
        if (!entry)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": unknown key '" + full + "'");
        try {
            entry->set(config, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " +
                                        full + ": " + e.what());
        }
    }
    return config;
}

PipelineConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

std::string serialize_config(const PipelineConfig& config) {
    std::string out;
    std::string section;
    for (const ConfigEntry& e : config_entries()) {
        const std::size_t dot = e.key.find('.');
        const std::string sec = e.key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += '\n';
            out += '[' + sec + "]\n";
            section = sec;
        }
        out += e.key.substr(dot + 1) + " = " + e.get(config) + '\n';
    }
    return out;
}

std::uint64_t config_hash(const PipelineConfig& config) {
    return fnv1a64(serialize_config(config));
}

std::string manifest_text(const RunManifest& manifest) {
    std::string out;
    out += "config_hash = " + fmt_hex64(manifest.config_hash) + '\n';
    out += "seed = " + std::to_string(manifest.seed) + '\n';
    out += "final = " + (manifest.final_path.empty() ? "-" : manifest.final_path) + '\n';
    for (const StageRecord& s : manifest.stages)
        out += "stage " + s.name + " seconds=" + fmt_fixed(s.seconds, 6) +
               " output=" + (s.output.empty() ? "-" : s.output) +
               " note=" + (s.note.empty() ? "-" : s.note) + '\n';
    for (const auto& [name, value] : manifest.metrics)
        out += "metric " + name + " = " + value + '\n';
    return out;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    const std::string tmp = path + ".tmp";
    write_text_file(tmp, manifest_text(manifest));
    std::filesystem::rename(tmp, path);
}

ImageGrid centroid_baseline(const std::vector<ImageGrid>& frames,
                            const StabilizeParams& params) {
    if (frames.size() < 2)
        throw std::invalid_argument("centroid_baseline: need at least 2 frames");
    auto table = pairwise_fields(frames, params);
    const int t = static_cast<int>(frames.size());
    std::vector<ImageGrid> warped(frames.size());
    parallel_for(frames.size(), params.threads, [&](std::size_t i) {
        VectorField mean(frames[i].width, frames[i].height);
        for (int j = 0; j < t; ++j)
            for (std::size_t k = 0; k < mean.size(); ++k) {
                mean.dx[k] += table[i][j].dx[k];
                mean.dy[k] += table[i][j].dy[k];
            }
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean.dx[k] /= t;
            mean.dy[k] /= t;
        }
        warped[i] = warp(frames[i], mean);
    });
    return temporal_mean(warped);
}

QualityReport evaluate(const ImageGrid& restored, const ImageGrid& truth,
                       const std::string& csv_path, const std::string& label) {
    QualityReport report = compare(restored, truth);
    if (!csv_path.empty()) {
        const bool fresh = !std::filesystem::exists(csv_path);
        std::ofstream out(csv_path, std::ios::app);
        if (!out) throw std::runtime_error("evaluate: cannot open " + csv_path);
        if (fresh) out << "label,psnr,ssim\n";
        out << (label.empty() ? "-" : label) << ',' << fmt_fixed(report.psnr, 4) << ','
            << fmt_fixed(report.ssim, 4) << '\n';
    }
    return report;
}

PipelineResult run_pipeline(const std::vector<ImageGrid>& frames,
                            const PipelineConfig& config) {
    if (frames.size() < 2)
        throw std::invalid_argument("pipeline: need at least 2 frames");

    PipelineConfig cfg = config;
    cfg.subsample.threads = cfg.threads;
    cfg.stabilize.threads = cfg.threads;
    cfg.fusion.threads = cfg.threads;

    const std::string out = cfg.output_dir;
    const bool writing = !out.empty();
    if (writing) {
        std::filesystem::create_directories(out);
        std::error_code ec;
        std::filesystem::remove(out + "/run.partial", ec);  // stale marker from a prior run
    }

    PipelineResult result;
    RunManifest& man = result.manifest;
    man.config_hash = config_hash(config);
    man.seed = cfg.seed;
    man.metrics.emplace_back("frames_in", std::to_string(frames.size()));

    // Runs one stage: timed, failure drops a marker and aborts with the
    // stage name so a caller knows where the chain broke.
    auto guarded = [&](const char* name, auto&& body) {
        StageRecord rec;
        rec.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body(rec);
        } catch (const std::exception& e) {
            if (writing)
                write_text_file(out + "/run.partial",
                                std::string("stage ") + name + ": " + e.what() + "\n");
            throw std::runtime_error(std::string("pipeline stage ") + name +
                                     " failed: " + e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        log_info("pipeline: " + rec.name + " done in " + fmt_fixed(rec.seconds, 3) +
                 " s" + (rec.note.empty() ? "" : " (" + rec.note + ")"));
        man.stages.push_back(std::move(rec));
    };

    std::vector<double> sharpness = normalized_sharpness(frames, cfg.threads);
    std::vector<StabilizeLogRow> stab_log;
    auto absorb_log = [&stab_log](const StabilizeResult& r) {
        stab_log.insert(stab_log.end(), r.log.begin(), r.log.end());
    };

    SubsampleResult sub;
    std::vector<ImageGrid> selected;
    guarded("subsample", [&](StageRecord& rec) {
        if (cfg.enable_subsample) {
            sub = subsample(frames, cfg.subsample);
            rec.note = "k_star=" + std::to_string(sub.k_star) + "/" +
                       std::to_string(frames.size());
            if (writing) {
                write_energy_curve_csv(out + "/energy_curve.csv", sub.energy_curve);
                rec.output = out + "/energy_curve.csv";
            }
        } else {
            sub.indices.resize(frames.size());
            for (std::size_t i = 0; i < frames.size(); ++i)
                sub.indices[i] = static_cast<int>(i);
            sub.reference = temporal_mean(frames);
            sub.k_star = static_cast<int>(frames.size());
            rec.note = "disabled";
        }
        selected.reserve(sub.indices.size());
        for (int idx : sub.indices) selected.push_back(frames[static_cast<std::size_t>(idx)]);
        if (writing && cfg.emit_intermediates)
            write_png16(out + "/reference.png", sub.reference);
    });

    std::vector<ImageGrid> internal = selected;
    guarded("stabilize", [&](StageRecord& rec) {
        if (!cfg.enable_stabilize) {
            rec.note = "disabled";
            return;
        }
        StabilizeResult r = internal_stabilize(selected, cfg.stabilize);
        internal = std::move(r.frames);
        absorb_log(r);
        if (writing && cfg.emit_intermediates) {
            write_frame_dir(out + "/internal", internal);
            rec.output = out + "/internal";
        }
    });

    std::vector<ImageGrid> absorbed = internal;
    guarded("absorb", [&](StageRecord& rec) {
        if (!cfg.enable_absorb) {
            rec.note = "disabled";
            return;
        }
        StabilizeResult r =
            absorbing_stabilize(internal, frames, sharpness, sub.indices, cfg.stabilize);
        absorbed = std::move(r.frames);
        absorb_log(r);
        int reused = 0;
        for (const StabilizeLogRow& row : r.log) reused += row.action == "reuse" ? 1 : 0;
        rec.note = "reused=" + std::to_string(reused) + "/" +
                   std::to_string(absorbed.size());
        if (writing && cfg.emit_intermediates) {
            write_frame_dir(out + "/absorbed", absorbed);
            rec.output = out + "/absorbed";
        }
    });

    std::vector<ImageGrid> registered = absorbed;
    guarded("register", [&](StageRecord& rec) {
        if (!cfg.enable_register) {
            rec.note = "disabled";
            return;
        }
        ImageGrid reference = temporal_mean(absorbed);
        StabilizeResult r = register_to_reference(absorbed, reference, cfg.stabilize);
        registered = std::move(r.frames);
        absorb_log(r);
        if (writing && cfg.emit_intermediates) {
            write_frame_dir(out + "/registered", registered);
            rec.output = out + "/registered";
        }
    });

    if (writing) write_stabilize_log_csv(out + "/stabilize_log.csv", stab_log);

    LowRankSplit split;
    guarded("split", [&](StageRecord& rec) {
        split = lowrank_split(registered, cfg.fusion.rpca);
        result.lowrank = split.lowrank;
        for (double& v : result.lowrank.data) v = clamp01(v);
        if (writing && cfg.emit_intermediates) {
            write_png16(out + "/lowrank.png", result.lowrank);
            rec.output = out + "/lowrank.png";
        }
    });

    ImageGrid deblurred;
    guarded("deblur", [&](StageRecord& rec) {
        if (!cfg.enable_deblur) {
            deblurred = result.lowrank;
            result.kernel = delta_kernel(cfg.deblur.kernel_size);
            rec.note = "disabled";
            return;
        }
        DeblurResult r = blind_deconvolve(result.lowrank, cfg.deblur);
        deblurred = std::move(r.image);
        result.kernel = std::move(r.kernel);
        rec.note = "objective " + fmt_fixed(r.objective_trace.front(), 1) + " -> " +
                   fmt_fixed(r.objective_trace.back(), 1) +
                   (r.diverged ? ", stopped early" : "");
        man.metrics.emplace_back("deblur_outer_completed",
                                 std::to_string(r.outer_completed));
        if (writing && cfg.emit_intermediates) {
            write_png16(out + "/deblurred.png", deblurred);
            write_png16(out + "/kernel.png", kernel_image(result.kernel));
            rec.output = out + "/deblurred.png";
        }
    });

    guarded("fuse", [&](StageRecord& rec) {
        if (!cfg.enable_fusion) {
            result.final_image = deblurred;
            rec.note = "disabled";
            return;
        }
        DetailLayer detail = build_detail(split.sparse, cfg.fusion);
        result.final_image = fuse(deblurred, detail, cfg.fusion.beta);
        int support = 0;
        for (double s : detail.support.data) support += s > 0.0 ? 1 : 0;
        rec.note = "detail support " + std::to_string(support) + " px";
    });

    man.metrics.emplace_back("frames_used", std::to_string(registered.size()));
    if (writing) {
        write_png16(out + "/final.png", result.final_image);
        man.final_path = out + "/final.png";
        write_manifest(out + "/manifest.txt", man);
    }
    return result;
}

PipelineResult run_all(const PipelineConfig& config) {
    if (config.input_dir.empty())
        throw std::invalid_argument("pipeline: input_dir is not set");
    std::vector<ImageGrid> frames = read_frame_dir(config.input_dir);
    return run_pipeline(frames, config);
}

} // namespace turbi
