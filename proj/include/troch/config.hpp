#pragma once

#include "troch/denoiser.hpp"
#include "troch/masking.hpp"
#include "troch/preprocess.hpp"

#include <string>

namespace troch {

/// Resolved configuration for the whole workflow. Defaults are the desk
/// scale; paper_scale() carries the published hyperparameters (base 64,
/// multipliers (1,2,2,4,4), 2 resblocks, lr 1e-5, batch 10, 1e6
/// iterations, T = 1000 at 256x256x32).
struct PipelineConfig {
    PreprocessConfig preprocess;
    // masking
    MaskSpec mask_spec;
    BackgroundParams background;
    PatellaParams patella;
    // diffusion
    int timesteps = 100;
    double beta_start = 1e-3;
    double beta_end = 0.2;
    std::string schedule_kind = "linear";
    bool clamp_x0 = false;
    double clamp_lo = -4.0;
    double clamp_hi = 4.0;
    int snapshot_every = 0;
    // network
    NetConfig network;
    // training
    TrainConfig training;

    static PipelineConfig desk_scale();  // defaults
    static PipelineConfig paper_scale(); // Table-style preset

    void validate() const;
    NoiseSchedule make_schedule() const;
};

/// Strict JSON parsing: unknown keys anywhere are rejected; values given
/// in the file override the desk-scale defaults (or the preset named by
/// a top-level "preset" key).
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config_json(const std::string& text, const std::string& origin);

/// Resolved config as JSON (used for run logs and round-trips).
std::string config_to_json_string(const PipelineConfig& cfg);

} // namespace troch
