#pragma once

#include "troch/volume.hpp"

namespace troch {

struct PreprocessConfig {
    Spacing target_spacing{0.6, 0.6, 4.5};
    Dims target_dims{256, 256, 32};
    double clip_low_pct = 1.0;  // percentiles in [0, 100)
    double clip_high_pct = 99.0;

    void validate() const;
};

struct NormalizeResult {
    Volume volume;
    bool degenerate = false; // constant input: output forced to all zeros
};

/// Trilinear resampling onto a new voxel spacing. Output dims are
/// round(dim * old_spacing / new_spacing), at least 1 per axis. Samples
/// are taken at voxel centers with edge clamping (no extrapolation).
Volume resample_trilinear(const Volume& v, Spacing target_spacing);

/// Keep a centered window when the input is larger than target along an
/// axis, zero-pad symmetrically when smaller. Odd remainders go to the
/// high-index side in both cases.
Volume center_crop_pad(const Volume& v, Dims target_dims);

/// Clip to the [low, high] nearest-rank percentiles, then map affinely
/// onto [0,1]. A constant input (equal percentiles) yields all zeros and
/// the degenerate flag.
NormalizeResult clip_normalize(const Volume& v, const PreprocessConfig& cfg);

/// Nearest-rank percentile of the volume's values, pct in [0, 100).
float percentile_nearest_rank(const Volume& v, double pct);

/// Full preprocessing chain: resample -> crop/pad -> clip + normalize.
NormalizeResult preprocess(const Volume& v, const PreprocessConfig& cfg);

} // namespace troch
