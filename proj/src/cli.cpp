#include "troch/cli.hpp"

#include "troch/config.hpp"
#include "troch/denoiser.hpp"
#include "troch/diffusion.hpp"
#include "troch/masking.hpp"
#include "troch/metrics.hpp"
#include "troch/phantom.hpp"
#include "troch/preprocess.hpp"
#include "troch/selftest.hpp"
#include "troch/volume_io.hpp"
#include "troch/wavelet.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace troch {

namespace {

void log_line(const std::string& msg) { std::cerr << "[troch] " << msg << "\n"; }

std::string hash_hex(const std::string& path) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << file_hash(path);
    return os.str();
}

void log_artifact(const char* role, const std::string& path) {
    log_line(std::string(role) + " " + path + " fnv1a=" + hash_hex(path));
}

std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t seed_value) {
    if (seed_opt->count() > 0) return seed_value;
    if (const char* env = std::getenv("TROCH_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw InvalidInput("TROCH_SEED is not an unsigned integer");
        }
    }
    return seed_value;
}

PipelineConfig resolve_config(const std::string& config_path) {
    PipelineConfig cfg =
        config_path.empty() ? PipelineConfig::desk_scale() : load_config(config_path);
    log_line("resolved config:");
    std::istringstream is(config_to_json_string(cfg));
    for (std::string line; std::getline(is, line);) std::cerr << "    " << line << "\n";
    return cfg;
}

Volume load_input_volume(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".nii") return load_nifti1(path);
    return load_raw(path);
}

json measurement_to_json(const std::string& name, const GrooveMeasurement& m) {
    json j;
    j["input"] = name;
    j["measurable"] = m.measurable;
    j["slice"] = m.landmarks.slice;
    if (m.measurable) {
        j["sulcus_angle_deg"] = m.sulcus_angle_deg;
        j["groove_depth_mm"] = m.groove_depth_mm;
        j["landmarks"] = {
            {"medial_peak_mm", m.landmarks.medial_peak_mm},
            {"lateral_peak_mm", m.landmarks.lateral_peak_mm},
            {"trough_mm", m.landmarks.trough_mm},
        };
    }
    return j;
}

json wilcoxon_to_json(const WilcoxonResult& w) {
    return json{{"n", w.n},
                {"w_plus", w.w_plus},
                {"w_minus", w.w_minus},
                {"exact", w.exact},
                {"p_two_sided", w.p_two_sided},
                {"p_greater", w.p_greater},
                {"p_less", w.p_less}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw RuntimeFailure("cannot write " + path);
    f << text;
    if (!f) throw RuntimeFailure("short write on " + path);
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; output slots keep
// results deterministic regardless of scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (!e.empty()) throw RuntimeFailure(e);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_preprocess(const std::string& input, const std::string& output,
                   const std::string& config_path) {
    const PipelineConfig cfg = resolve_config(config_path);
    log_artifact("input", input);
    const Volume v = load_input_volume(input);
    const NormalizeResult res = preprocess(v, cfg.preprocess);
    if (res.degenerate) log_line("warning: degenerate input (constant after crop)");
    save_raw(res.volume, output);
    log_artifact("output", output);
    return 0;
}

int cmd_mask(const std::string& input, const std::string& labels_path,
             const std::string& out_mask, const std::string& out_clean,
             const std::string& out_masked, bool skip_background,
             const std::string& config_path) {
    const PipelineConfig cfg = resolve_config(config_path);
    log_artifact("input", input);
    Volume v = load_raw(input);

    BinaryMask fg;
    if (skip_background) {
        log_line("background removal skipped");
    } else {
        BackgroundResult bg = segment_background(v, cfg.background);
        v = std::move(bg.cleaned);
        fg = std::move(bg.foreground);
        log_line("background removed (foreground voxels: " + std::to_string(fg.count()) + ")");
    }

    BinaryMask mask;
    bool used_fallback = true;
    if (!labels_path.empty()) {
        log_artifact("labels", labels_path);
        const LabelVolume labels = load_labels(labels_path);
        const PatellaResult pr = localize_patella(labels, cfg.patella);
        if (pr.found) {
            mask = bowl_mask(pr.patella, cfg.mask_spec);
            used_fallback = false;
            log_line("patella found; bowl mask with " + std::to_string(mask.count()) +
                     " voxels");
        }
    }
    if (used_fallback) {
        mask = ellipsoid_mask(v.dims, v.spacing, cfg.mask_spec);
        log_line("fallback ellipsoid mask with " + std::to_string(mask.count()) + " voxels");
    }

    save_mask(mask, out_mask);
    log_artifact("mask", out_mask);
    if (!out_clean.empty()) {
        save_raw(v, out_clean);
        log_artifact("clean", out_clean);
    }
    if (!out_masked.empty()) {
        save_raw(apply_mask(v, mask), out_masked);
        log_artifact("masked", out_masked);
    }
    return 0;
}

PhantomSpec phantom_spec_from_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open phantom spec " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("bad phantom spec " + path + ": " + e.what());
    }
    PhantomSpec spec;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "dims")
                spec.dims = {val[0].get<int>(), val[1].get<int>(), val[2].get<int>()};
            else if (key == "spacing_mm")
                spec.spacing = {val[0].get<double>(), val[1].get<double>(),
                                val[2].get<double>()};
            else if (key == "sulcus_angle_deg")
                spec.sulcus_angle_deg = val.get<double>();
            else if (key == "groove_depth_mm")
                spec.groove_depth_mm = val.get<double>();
            else if (key == "condyle_width_mm")
                spec.condyle_width_mm = val.get<double>();
            else if (key == "body_depth_mm")
                spec.body_depth_mm = val.get<double>();
            else if (key == "patella_semi_axes_mm")
                spec.patella_semi_axes_mm = {val[0].get<double>(), val[1].get<double>(),
                                             val[2].get<double>()};
            else if (key == "patella_gap_mm")
                spec.patella_gap_mm = val.get<double>();
            else if (key == "noise_level")
                spec.noise_level = val.get<double>();
            else if (key == "seed")
                spec.seed = val.get<std::uint64_t>();
            else
                throw InvalidInput("phantom spec: unknown key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw InvalidInput("bad phantom spec " + path + ": " + e.what());
    }
    return spec;
}

int cmd_phantom(const std::string& spec_path, double sa, double tgd, bool has_sa,
                bool has_tgd, const std::string& out_dir, const std::string& name,
                int count, std::uint64_t seed, std::vector<int> dims,
                std::vector<double> spacing, double noise, bool has_noise,
                double condyle_width, double body_depth) {
    fs::create_directories(out_dir);
    const PhantomSpec base =
        spec_path.empty() ? PhantomSpec{} : phantom_spec_from_json(spec_path);
    for (int i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        if (has_sa) spec.sulcus_angle_deg = sa;
        if (has_tgd) spec.groove_depth_mm = tgd;
        if (has_noise) spec.noise_level = noise;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        if (!dims.empty()) spec.dims = {dims[0], dims[1], dims[2]};
        if (!spacing.empty()) spec.spacing = {spacing[0], spacing[1], spacing[2]};
        if (condyle_width > 0.0) spec.condyle_width_mm = condyle_width;
        if (body_depth > 0.0) spec.body_depth_mm = body_depth;

        const PhantomData ph = generate_phantom(spec);
        const std::string stem =
            (fs::path(out_dir) / (count == 1 ? name : name + "_" + std::to_string(i)))
                .string();
        save_raw(ph.volume, stem + ".vol");
        save_labels(ph.bone_labels, stem + "_labels.vol");

        json truth;
        truth["sulcus_angle_deg"] = ph.ground_truth.sulcus_angle_deg;
        truth["groove_depth_mm"] = ph.ground_truth.groove_depth_mm;
        truth["slice"] = ph.ground_truth.landmarks.slice;
        truth["landmarks"] = {
            {"medial_peak_mm", ph.ground_truth.landmarks.medial_peak_mm},
            {"lateral_peak_mm", ph.ground_truth.landmarks.lateral_peak_mm},
            {"trough_mm", ph.ground_truth.landmarks.trough_mm},
        };
        truth["seed"] = spec.seed;
        write_text(stem + "_truth.json", truth.dump(2) + "\n");
        log_artifact("phantom", stem + ".vol");
    }
    log_line("seed " + std::to_string(seed));
    return 0;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_ckpt,
              const std::string& trace_path, int augment, const std::string& config_path,
              const CLI::Option* seed_opt, std::uint64_t seed_flag,
              const CLI::Option* iter_opt, int iterations_flag) {
    PipelineConfig cfg = resolve_config(config_path);
    cfg.training.seed = resolve_seed(seed_opt, seed_opt->count() ? seed_flag : cfg.training.seed);
    if (iter_opt->count() > 0) cfg.training.iterations = iterations_flag;
    cfg.validate();

    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string p = entry.path().string();
        if (!ends_with(p, ".vol") || ends_with(p, "_labels.vol") || ends_with(p, "_mask.vol"))
            continue;
        stems.push_back(p.substr(0, p.size() - 4));
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw InvalidInput("train: no volumes found in " + data_dir);
    log_line("training volumes: " + std::to_string(stems.size()));

    Rng aug_rng(cfg.training.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<TrainSample> samples;
    for (const auto& stem : stems) {
        TrainSample s;
        s.y0 = load_raw(stem + ".vol");
        if (fs::exists(stem + "_mask.vol")) {
            s.mask = load_mask(stem + "_mask.vol");
        } else if (fs::exists(stem + "_labels.vol")) {
            const LabelVolume labels = load_labels(stem + "_labels.vol");
            const PatellaResult pr = localize_patella(labels, cfg.patella);
            if (!pr.found)
                throw InvalidInput("train: no patella in " + stem + "_labels.vol");
            s.mask = bowl_mask(pr.patella, cfg.mask_spec);
        } else {
            throw InvalidInput("train: no mask or labels for " + stem + ".vol");
        }
        // Ellipsoid augmentation around the same grid.
        for (int a = 0; a < augment; ++a) {
            MaskSpec aug;
            for (int ax = 0; ax < 3; ++ax) {
                const double extent = s.y0.dims[ax] * s.y0.spacing[ax];
                aug.fallback_semi_axes_mm[ax] = aug_rng.uniform_range(0.15, 0.30) * extent;
                aug.fallback_center[ax] = aug_rng.uniform_range(0.30, 0.70);
            }
            TrainSample extra;
            extra.y0 = s.y0;
            extra.mask = ellipsoid_mask(s.y0.dims, s.y0.spacing, aug);
            if (extra.mask.count() > 0) samples.push_back(std::move(extra));
        }
        samples.push_back(std::move(s));
    }
    log_line("training samples (with augmentation): " + std::to_string(samples.size()));

    const NoiseSchedule schedule = cfg.make_schedule();
    DenoiserNet net(cfg.network);
    log_line("network parameters: " + std::to_string(net.param_count()));
    log_line("seed " + std::to_string(cfg.training.seed));

    const TrainResult result = train_denoiser(net, samples, schedule, cfg.training);
    const auto smoothed = smooth_trace(result.loss_trace, 100);
    log_line("loss: first " + std::to_string(result.loss_trace.front()) + ", smoothed last " +
             std::to_string(smoothed.back()));

    save_checkpoint(net, out_ckpt, cfg.training.iterations, cfg.training.seed);
    log_artifact("checkpoint", out_ckpt);
    if (!trace_path.empty()) {
        json jt;
        jt["loss_trace"] = result.loss_trace;
        write_text(trace_path, jt.dump() + "\n");
        log_artifact("trace", trace_path);
    }
    return 0;
}

int cmd_inpaint(const std::vector<std::string>& inputs, std::vector<std::string> masks,
                const std::vector<std::string>& outputs, const std::string& ckpt_path,
                std::uint64_t seed, int jobs, const std::string& snapshot_dir,
                const std::string& config_path) {
    const PipelineConfig cfg = resolve_config(config_path);
    if (inputs.size() != outputs.size())
        throw InvalidInput("inpaint: --input and --out counts differ");
    if (masks.size() == 1 && inputs.size() > 1)
        masks.assign(inputs.size(), masks.front()); // one shared mask
    if (masks.size() != inputs.size())
        throw InvalidInput("inpaint: --mask count must be 1 or match --input");

    CheckpointMeta meta;
    const DenoiserNet net = load_checkpoint(ckpt_path, &meta);
    log_artifact("checkpoint", ckpt_path);
    log_line("seed " + std::to_string(seed));
    const NoiseSchedule schedule = cfg.make_schedule();

    if (!snapshot_dir.empty()) fs::create_directories(snapshot_dir);

    parallel_for(inputs.size(), jobs, [&](std::size_t i) {
        const Volume v = load_raw(inputs[i]);
        const BinaryMask m = load_mask(masks[i]);
        Rng rng(seed + i);
        SamplerConfig sampler;
        sampler.clamp_x0 = cfg.clamp_x0;
        sampler.clamp_lo = cfg.clamp_lo;
        sampler.clamp_hi = cfg.clamp_hi;
        if (!snapshot_dir.empty() && cfg.snapshot_every > 0) {
            sampler.snapshot_every = cfg.snapshot_every;
            const std::string stem = fs::path(inputs[i]).stem().string();
            sampler.snapshot_sink = [&, stem](int t, const WaveletCoeffs& c) {
                save_coeffs(c, (fs::path(snapshot_dir) /
                                (stem + "_t" + std::to_string(t) + ".coeffs"))
                                   .string());
            };
        }
        const Volume out = inpaint(v, m, net, schedule, rng, sampler);
        save_raw(out, outputs[i]);
    });
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        log_artifact("input", inputs[i]);
        log_artifact("output", outputs[i]);
    }
    return 0;
}

int cmd_measure(const std::vector<std::string>& inputs,
                const std::vector<std::string>& labels,
                const std::vector<std::string>& after, int slice_flag, bool has_slice,
                const std::string& csv_path, const std::string& out_path) {
    if (!labels.empty() && labels.size() != inputs.size())
        throw InvalidInput("measure: --labels count must match --input");
    if (!after.empty() && after.size() != inputs.size())
        throw InvalidInput("measure: --after count must match --input");

    auto pick_slice = [&](std::size_t i, const Volume& v) -> int {
        if (has_slice) return slice_flag;
        if (!labels.empty()) return choose_measurement_slice(load_labels(labels[i]));
        return v.dims[2] / 2;
    };

    json report = json::array();
    std::vector<GrooveMeasurement> before_m(inputs.size()), after_m(after.size());
    std::ostringstream csv;
    csv << "input,slice,measurable,sulcus_angle_deg,groove_depth_mm";
    if (!after.empty())
        csv << ",after_measurable,after_sulcus_angle_deg,after_groove_depth_mm";
    csv << "\n";

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Volume v = load_raw(inputs[i]);
        const int slice = pick_slice(i, v);
        before_m[i] = measure_sulcus_angle(v, slice);
        json entry = measurement_to_json(inputs[i], before_m[i]);
        csv << inputs[i] << "," << slice << "," << (before_m[i].measurable ? 1 : 0) << ","
            << before_m[i].sulcus_angle_deg << "," << before_m[i].groove_depth_mm;
        if (!after.empty()) {
            const Volume va = load_raw(after[i]);
            after_m[i] = measure_sulcus_angle(va, slice);
            entry["after"] = measurement_to_json(after[i], after_m[i]);
            csv << "," << (after_m[i].measurable ? 1 : 0) << ","
                << after_m[i].sulcus_angle_deg << "," << after_m[i].groove_depth_mm;
        }
        csv << "\n";
        report.push_back(std::move(entry));
    }

    json out;
    out["measurements"] = std::move(report);
    if (!after.empty()) {
        std::vector<double> sa_b, sa_a, tgd_b, tgd_a;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (!before_m[i].measurable || !after_m[i].measurable) continue;
            sa_b.push_back(before_m[i].sulcus_angle_deg);
            sa_a.push_back(after_m[i].sulcus_angle_deg);
            tgd_b.push_back(before_m[i].groove_depth_mm);
            tgd_a.push_back(after_m[i].groove_depth_mm);
        }
        out["paired_measurable"] = sa_b.size();
        if (!sa_b.empty()) {
            out["wilcoxon_sulcus_angle"] = wilcoxon_to_json(wilcoxon_signed_rank(sa_b, sa_a));
            out["wilcoxon_groove_depth"] =
                wilcoxon_to_json(wilcoxon_signed_rank(tgd_b, tgd_a));
        }
    }

    const std::string text = out.dump(2) + "\n";
    if (out_path.empty())
        std::cout << text;
    else {
        write_text(out_path, text);
        log_artifact("report", out_path);
    }
    if (!csv_path.empty()) {
        write_text(csv_path, csv.str());
        log_artifact("csv", csv_path);
    }
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& preds, std::vector<std::string> refs,
                 std::vector<std::string> masks, const std::string& out_path, int jobs) {
    if (refs.size() == 1 && preds.size() > 1) refs.assign(preds.size(), refs.front());
    if (masks.size() == 1 && preds.size() > 1) masks.assign(preds.size(), masks.front());
    if (refs.size() != preds.size() || masks.size() != preds.size())
        throw InvalidInput("evaluate: --ref/--mask counts must be 1 or match --pred");

    std::vector<MetricReport> reports(preds.size());
    parallel_for(preds.size(), jobs, [&](std::size_t i) {
        reports[i] =
            evaluate_masked(load_raw(preds[i]), load_raw(refs[i]), load_mask(masks[i]));
    });

    // JSON lines, one per volume, then one aggregate object.
    std::ostringstream out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const json line = {{"pred", preds[i]},
                           {"ref", refs[i]},
                           {"mse", reports[i].mse},
                           {"psnr_db", reports[i].psnr_db},
                           {"ssim", reports[i].ssim},
                           {"mask_voxels", reports[i].mask_voxels}};
        out << line.dump() << "\n";
    }
    const AggregateReport agg = aggregate_reports(reports);
    const json agg_line = {
        {"aggregate",
         {{"count", agg.count},
          {"mse", {{"mean", agg.mse.mean}, {"std", agg.mse.stddev}}},
          {"psnr_db", {{"mean", agg.psnr_db.mean}, {"std", agg.psnr_db.stddev}}},
          {"ssim", {{"mean", agg.ssim.mean}, {"std", agg.ssim.stddev}}}}}};
    out << agg_line.dump() << "\n";

    if (out_path.empty())
        std::cout << out.str();
    else {
        write_text(out_path, out.str());
        log_artifact("report", out_path);
    }
    return 0;
}

} // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"Pseudo-healthy knee volume inpainting with a wavelet diffusion model"};
    app.require_subcommand(1);

    // preprocess
    auto* sp = app.add_subcommand("preprocess",
                                  "Resample, crop/pad and normalize a volume");
    std::string p_in, p_out, p_cfg;
    sp->add_option("--input", p_in, "Input volume (.vol or .nii)")->required();
    sp->add_option("--output", p_out, "Output .vol path")->required();
    sp->add_option("--config", p_cfg, "Pipeline config JSON");

    // mask
    auto* sm = app.add_subcommand("mask", "Background removal and peri-patellar mask");
    std::string m_in, m_labels, m_mask, m_clean, m_masked, m_cfg;
    bool m_skip_bg = false;
    sm->add_option("--input", m_in, "Preprocessed volume (.vol)")->required();
    sm->add_option("--labels", m_labels, "Bone label map (.vol, u8)");
    sm->add_option("--out-mask", m_mask, "Output mask path")->required();
    sm->add_option("--out-clean", m_clean, "Output background-removed volume");
    sm->add_option("--out-masked", m_masked, "Output masked volume (m1)");
    sm->add_flag("--skip-background", m_skip_bg, "Skip background removal");
    sm->add_option("--config", m_cfg, "Pipeline config JSON");

    // phantom
    auto* sph = app.add_subcommand("phantom", "Generate synthetic knee phantoms");
    double ph_sa = 145.0, ph_tgd = 2.6, ph_noise = 0.0, ph_cw = -1.0, ph_bd = -1.0;
    std::string ph_out, ph_name = "phantom";
    int ph_count = 1;
    std::uint64_t ph_seed = 0;
    std::vector<int> ph_dims;
    std::vector<double> ph_spacing;
    std::string ph_spec;
    sph->add_option("--spec", ph_spec, "Phantom spec JSON (flags override)");
    auto* ph_sa_opt = sph->add_option("--sa", ph_sa, "Sulcus angle in degrees");
    auto* ph_tgd_opt = sph->add_option("--tgd", ph_tgd, "Trochlear groove depth in mm");
    sph->add_option("--out", ph_out, "Output directory")->required();
    sph->add_option("--name", ph_name, "Output file stem");
    sph->add_option("--count", ph_count, "Number of phantoms (seeds seed..seed+count-1)");
    auto* ph_seed_opt = sph->add_option("--seed", ph_seed, "Base seed");
    sph->add_option("--dims", ph_dims, "Voxel dims nx ny nz")->expected(3);
    sph->add_option("--spacing", ph_spacing, "Spacing mm sx sy sz")->expected(3);
    auto* ph_noise_opt = sph->add_option("--noise", ph_noise, "Gaussian noise sigma");
    sph->add_option("--condyle-width", ph_cw, "Condyle width in mm");
    sph->add_option("--body-depth", ph_bd, "Femur body depth in mm");

    // train
    auto* st = app.add_subcommand("train", "Train the denoiser on healthy volumes");
    std::string t_data, t_out, t_trace, t_cfg;
    int t_augment = 1, t_iters = 0;
    std::uint64_t t_seed = 0;
    st->add_option("--data", t_data, "Directory of .vol volumes with _labels/_mask")
        ->required();
    st->add_option("--out", t_out, "Output checkpoint path")->required();
    st->add_option("--trace", t_trace, "Write the loss trace JSON here");
    st->add_option("--augment", t_augment, "Random-ellipsoid samples per volume");
    auto* t_seed_opt = st->add_option("--seed", t_seed, "Training seed");
    auto* t_iter_opt = st->add_option("--iterations", t_iters, "Override iteration count");
    st->add_option("--config", t_cfg, "Pipeline config JSON");

    // inpaint
    auto* si = app.add_subcommand("inpaint", "Fill masked regions with the trained model");
    std::vector<std::string> i_in, i_mask, i_out;
    std::string i_ckpt, i_cfg, i_snapdir;
    std::uint64_t i_seed = 0;
    int i_jobs = 1;
    si->add_option("--input", i_in, "Input volume(s)")->required();
    si->add_option("--mask", i_mask, "Mask volume(s); one shared mask allowed")->required();
    si->add_option("--out", i_out, "Output volume(s)")->required();
    si->add_option("--checkpoint", i_ckpt, "Trained checkpoint")->required();
    auto* i_seed_opt = si->add_option("--seed", i_seed, "Sampler seed");
    si->add_option("--jobs", i_jobs, "Parallel volumes");
    si->add_option("--snapshot-dir", i_snapdir, "Dump x_t coefficient snapshots here");
    si->add_option("--config", i_cfg, "Pipeline config JSON");

    // measure
    auto* sme = app.add_subcommand("measure", "Sulcus angle / groove depth measurement");
    std::vector<std::string> me_in, me_labels, me_after;
    std::string me_csv, me_out;
    int me_slice = 0;
    sme->add_option("--input", me_in, "Volume(s) to measure")->required();
    sme->add_option("--labels", me_labels, "Label map(s) for slice selection");
    sme->add_option("--after", me_after, "Paired after-inpainting volume(s)");
    auto* me_slice_opt = sme->add_option("--slice", me_slice, "Fixed axial slice index");
    sme->add_option("--csv", me_csv, "CSV output path");
    sme->add_option("--out", me_out, "JSON report path (stdout when omitted)");

    // evaluate
    auto* se = app.add_subcommand("evaluate", "Masked MSE/PSNR/SSIM reports");
    std::vector<std::string> e_pred, e_ref, e_mask;
    std::string e_out;
    int e_jobs = 1;
    se->add_option("--pred", e_pred, "Predicted volume(s)")->required();
    se->add_option("--ref", e_ref, "Reference volume(s); one shared allowed")->required();
    se->add_option("--mask", e_mask, "Mask volume(s); one shared allowed")->required();
    se->add_option("--out", e_out, "JSON report path (stdout when omitted)");
    se->add_option("--jobs", e_jobs, "Parallel volumes");

    // selftest
    auto* ss = app.add_subcommand("selftest", "Run the built-in oracle/invariant checks");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("troch");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sp) return cmd_preprocess(p_in, p_out, p_cfg);
        if (*sm) return cmd_mask(m_in, m_labels, m_mask, m_clean, m_masked, m_skip_bg, m_cfg);
        if (*sph)
            return cmd_phantom(ph_spec, ph_sa, ph_tgd, ph_sa_opt->count() > 0,
                               ph_tgd_opt->count() > 0, ph_out, ph_name, ph_count,
                               resolve_seed(ph_seed_opt, ph_seed), ph_dims, ph_spacing,
                               ph_noise, ph_noise_opt->count() > 0, ph_cw, ph_bd);
        if (*st)
            return cmd_train(t_data, t_out, t_trace, t_augment, t_cfg, t_seed_opt, t_seed,
                             t_iter_opt, t_iters);
        if (*si)
            return cmd_inpaint(i_in, i_mask, i_out, i_ckpt, resolve_seed(i_seed_opt, i_seed),
                               i_jobs, i_snapdir, i_cfg);
        if (*sme)
            return cmd_measure(me_in, me_labels, me_after, me_slice,
                               me_slice_opt->count() > 0, me_csv, me_out);
        if (*se) return cmd_evaluate(e_pred, e_ref, e_mask, e_out, e_jobs);
        if (*ss) {
            const int failures = run_selftest(std::cout);
            return failures == 0 ? 0 : 2;
        }
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace troch
