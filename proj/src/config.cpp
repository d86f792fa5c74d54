#include "troch/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

using json = nlohmann::json;

namespace troch {

PipelineConfig PipelineConfig::desk_scale() {
    PipelineConfig cfg;
    // The loss takes a mean over coefficients but sums the HF L1 terms;
    // at desk resolutions a unit weight would drown the reconstruction
    // gradients, so the desk default scales it down.
    cfg.training.lambda_reg = 1e-3;
    return cfg;
}

PipelineConfig PipelineConfig::paper_scale() {
    PipelineConfig cfg;
    cfg.preprocess = PreprocessConfig{}; // (0.6, 0.6, 4.5) mm at (256, 256, 32)
    cfg.timesteps = 1000;
    cfg.beta_start = 1e-4;
    cfg.beta_end = 0.02;
    cfg.network.base_channels = 64;
    cfg.network.channel_mult = {1, 2, 2, 4, 4};
    cfg.network.res_blocks = 2;
    cfg.network.emb_dim = 64;
    cfg.training.learning_rate = 1e-5;
    cfg.training.batch_size = 10;
    cfg.training.iterations = 1000000;
    return cfg;
}

void PipelineConfig::validate() const {
    preprocess.validate();
    mask_spec.validate();
    if (background.otsu_bins < 2) throw InvalidInput("config: otsu_bins must be >= 2");
    if (background.se_radius_mm < 0.0)
        throw InvalidInput("config: se_radius_mm must be >= 0");
    if (background.connectivity != 6 && background.connectivity != 26)
        throw InvalidInput("config: connectivity must be 6 or 26");
    if (patella.min_volume_cm3 < 0.0 || patella.max_volume_cm3 <= patella.min_volume_cm3)
        throw InvalidInput("config: patella volume range invalid");
    if (timesteps < 1) throw InvalidInput("config: timesteps must be >= 1");
    if (schedule_kind != "linear")
        throw InvalidInput("config: schedule must be \"linear\"");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidInput("config: need 0 < beta_start <= beta_end < 1");
    if (snapshot_every < 0) throw InvalidInput("config: snapshot_every must be >= 0");
    network.validate();
    training.validate();
}

NoiseSchedule PipelineConfig::make_schedule() const {
    return make_linear_schedule(timesteps, beta_start, beta_end);
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, _] : j.items())
        if (!known.count(key))
            throw InvalidInput("config: unknown key \"" + key + "\" in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_triple(const json& j, const char* key, std::array<double, 3>& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw InvalidInput(std::string("config: ") + key + " must be a 3-array");
    for (int i = 0; i < 3; ++i) out[i] = a[i].get<double>();
}

void maybe_dims(const json& j, const char* key, Dims& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw InvalidInput(std::string("config: ") + key + " must be a 3-array");
    for (int i = 0; i < 3; ++i) out[i] = a[i].get<int>();
}

} // namespace

PipelineConfig parse_config_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput("config " + origin + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidInput("config " + origin + ": expected an object");

    reject_unknown_keys(j, {"preset", "preprocess", "masking", "diffusion", "network",
                            "training"},
                        origin);

    PipelineConfig cfg = PipelineConfig::desk_scale();
    if (j.contains("preset")) {
        const auto preset = j.at("preset").get<std::string>();
        if (preset == "desk")
            cfg = PipelineConfig::desk_scale();
        else if (preset == "paper")
            cfg = PipelineConfig::paper_scale();
        else
            throw InvalidInput("config: unknown preset \"" + preset + "\"");
    }

    try {
        if (j.contains("preprocess")) {
            const auto& p = j.at("preprocess");
            reject_unknown_keys(p, {"target_spacing_mm", "target_dims", "clip_low_pct",
                                    "clip_high_pct"},
                                "preprocess");
            maybe_triple(p, "target_spacing_mm", cfg.preprocess.target_spacing);
            maybe_dims(p, "target_dims", cfg.preprocess.target_dims);
            maybe(p, "clip_low_pct", cfg.preprocess.clip_low_pct);
            maybe(p, "clip_high_pct", cfg.preprocess.clip_high_pct);
        }
        if (j.contains("masking")) {
            const auto& m = j.at("masking");
            reject_unknown_keys(m, {"offset_mm", "fallback_semi_axes_mm", "fallback_center",
                                    "se_radius_mm", "otsu_bins", "connectivity",
                                    "patella_min_cm3", "patella_max_cm3"},
                                "masking");
            maybe(m, "offset_mm", cfg.mask_spec.offset_mm);
            maybe_triple(m, "fallback_semi_axes_mm", cfg.mask_spec.fallback_semi_axes_mm);
            maybe_triple(m, "fallback_center", cfg.mask_spec.fallback_center);
            maybe(m, "se_radius_mm", cfg.background.se_radius_mm);
            maybe(m, "otsu_bins", cfg.background.otsu_bins);
            maybe(m, "connectivity", cfg.background.connectivity);
            maybe(m, "patella_min_cm3", cfg.patella.min_volume_cm3);
            maybe(m, "patella_max_cm3", cfg.patella.max_volume_cm3);
        }
        if (j.contains("diffusion")) {
            const auto& d = j.at("diffusion");
            reject_unknown_keys(d, {"timesteps", "beta_start", "beta_end", "schedule",
                                    "clamp_x0", "clamp_lo", "clamp_hi", "snapshot_every"},
                                "diffusion");
            maybe(d, "timesteps", cfg.timesteps);
            maybe(d, "beta_start", cfg.beta_start);
            maybe(d, "beta_end", cfg.beta_end);
            maybe(d, "schedule", cfg.schedule_kind);
            maybe(d, "clamp_x0", cfg.clamp_x0);
            maybe(d, "clamp_lo", cfg.clamp_lo);
            maybe(d, "clamp_hi", cfg.clamp_hi);
            maybe(d, "snapshot_every", cfg.snapshot_every);
        }
        if (j.contains("network")) {
            const auto& n = j.at("network");
            reject_unknown_keys(n, {"base_channels", "channel_mult", "res_blocks",
                                    "emb_dim", "init_seed"},
                                "network");
            maybe(n, "base_channels", cfg.network.base_channels);
            maybe(n, "channel_mult", cfg.network.channel_mult);
            maybe(n, "res_blocks", cfg.network.res_blocks);
            maybe(n, "emb_dim", cfg.network.emb_dim);
            maybe(n, "init_seed", cfg.network.init_seed);
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            reject_unknown_keys(t, {"learning_rate", "momentum", "batch_size", "iterations",
                                    "seed", "lambda_reg"},
                                "training");
            maybe(t, "learning_rate", cfg.training.learning_rate);
            maybe(t, "momentum", cfg.training.momentum);
            maybe(t, "batch_size", cfg.training.batch_size);
            maybe(t, "iterations", cfg.training.iterations);
            maybe(t, "seed", cfg.training.seed);
            maybe(t, "lambda_reg", cfg.training.lambda_reg);
        }
    } catch (const json::exception& e) {
        throw InvalidInput("config " + origin + ": " + e.what());
    }

    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_json(text, path);
}

std::string config_to_json_string(const PipelineConfig& cfg) {
    json j;
    j["preprocess"] = {
        {"target_spacing_mm",
         {cfg.preprocess.target_spacing[0], cfg.preprocess.target_spacing[1],
          cfg.preprocess.target_spacing[2]}},
        {"target_dims",
         {cfg.preprocess.target_dims[0], cfg.preprocess.target_dims[1],
          cfg.preprocess.target_dims[2]}},
        {"clip_low_pct", cfg.preprocess.clip_low_pct},
        {"clip_high_pct", cfg.preprocess.clip_high_pct},
    };
    j["masking"] = {
        {"offset_mm", cfg.mask_spec.offset_mm},
        {"fallback_semi_axes_mm",
         {cfg.mask_spec.fallback_semi_axes_mm[0], cfg.mask_spec.fallback_semi_axes_mm[1],
          cfg.mask_spec.fallback_semi_axes_mm[2]}},
        {"fallback_center",
         {cfg.mask_spec.fallback_center[0], cfg.mask_spec.fallback_center[1],
          cfg.mask_spec.fallback_center[2]}},
        {"se_radius_mm", cfg.background.se_radius_mm},
        {"otsu_bins", cfg.background.otsu_bins},
        {"connectivity", cfg.background.connectivity},
        {"patella_min_cm3", cfg.patella.min_volume_cm3},
        {"patella_max_cm3", cfg.patella.max_volume_cm3},
    };
    j["diffusion"] = {
        {"timesteps", cfg.timesteps},     {"beta_start", cfg.beta_start},
        {"beta_end", cfg.beta_end},       {"schedule", cfg.schedule_kind},
        {"clamp_x0", cfg.clamp_x0},       {"clamp_lo", cfg.clamp_lo},
        {"clamp_hi", cfg.clamp_hi},       {"snapshot_every", cfg.snapshot_every},
    };
    j["network"] = {
        {"base_channels", cfg.network.base_channels},
        {"channel_mult", cfg.network.channel_mult},
        {"res_blocks", cfg.network.res_blocks},
        {"emb_dim", cfg.network.emb_dim},
        {"init_seed", cfg.network.init_seed},
    };
    j["training"] = {
        {"learning_rate", cfg.training.learning_rate},
        {"momentum", cfg.training.momentum},
        {"batch_size", cfg.training.batch_size},
        {"iterations", cfg.training.iterations},
        {"seed", cfg.training.seed},
        {"lambda_reg", cfg.training.lambda_reg},
    };
    return j.dump(2);
}

} // namespace troch
