#pragma once

#include "troch/volume.hpp"

#include <array>
#include <vector>

namespace troch {

/// Set of voxel offsets whose world-space distance, normalized per axis
/// by the radius in mm, is at most 1. Always contains the origin and is
/// symmetric under negation.
struct StructuringElement {
    std::vector<std::array<int, 3>> offsets;

    static StructuringElement ellipsoid(std::array<double, 3> radius_mm, Spacing spacing);
};

struct MaskSpec {
    double offset_mm = 30.0; // peri-patellar bowl offset
    std::array<double, 3> fallback_semi_axes_mm{30.0, 30.0, 13.5};
    std::array<double, 3> fallback_center{0.5, 0.25, 0.5}; // fractional, anterior-central

    void validate() const;
};

struct PatellaParams {
    double min_volume_cm3 = 2.0; // plausible range at full scale
    double max_volume_cm3 = 100.0;
    int connectivity = 26;
};

struct PatellaResult {
    bool found = false;
    BinaryMask patella;
};

/// Bin-edge threshold maximizing between-class variance over the
/// histogram of counts; cut index k separates bins [0,k) from [k,bins).
/// Ties break toward the lower cut.
int otsu_cut_from_histogram(const std::vector<double>& counts);

/// Otsu threshold of a volume over a `bins`-bin histogram of its value
/// range. Constant volumes are rejected.
float otsu_threshold(const Volume& v, int bins = 256);

BinaryMask morph_erode(const BinaryMask& m, const StructuringElement& se);
BinaryMask morph_dilate(const BinaryMask& m, const StructuringElement& se);
BinaryMask morph_open(const BinaryMask& m, const StructuringElement& se);
BinaryMask morph_close(const BinaryMask& m, const StructuringElement& se);

/// Keep only the maximal-cardinality connected component (6 or 26
/// connectivity). Ties break toward the component containing the
/// smallest linear index. Empty input is an error.
BinaryMask largest_component(const BinaryMask& m, int connectivity = 26);

struct BackgroundResult {
    BinaryMask foreground;
    Volume cleaned; // input with background voxels set to 0
};

struct BackgroundParams {
    int otsu_bins = 256;
    double se_radius_mm = 2.0; // opening/closing element radius
    int connectivity = 26;
};

/// Otsu -> open -> close -> largest component; background set to zero.
BackgroundResult segment_background(const Volume& v, const BackgroundParams& params = {});

/// Pick the bone component whose centroid is most anterior (smallest y)
/// among components within the plausible volume range. Components are
/// grown over equal nonzero labels.
PatellaResult localize_patella(const LabelVolume& labels, const PatellaParams& params = {});

/// World-space dilation of the patella by offset_mm (ellipsoidal ball in
/// mm) minus the patella voxels themselves.
BinaryMask bowl_mask(const BinaryMask& patella, const MaskSpec& spec);

/// Fallback: voxels inside the world-space ellipsoid at the fractional
/// center with the given semi-axes.
BinaryMask ellipsoid_mask(Dims dims, Spacing spacing, const MaskSpec& spec);

} // namespace troch
