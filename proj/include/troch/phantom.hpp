#pragma once

#include "troch/volume.hpp"

#include <array>
#include <cstdint>

namespace troch {

/// Parametric distal-femur stand-in: a soft-tissue cylinder holding a
/// femur body whose anterior surface forms a V-groove with the requested
/// sulcus angle and groove depth, plus a separate anterior patella blob.
struct PhantomSpec {
    Dims dims{32, 32, 8};
    Spacing spacing{1.2, 1.2, 4.0};
    double sulcus_angle_deg = 145.0; // in (90, 180)
    double groove_depth_mm = 2.6;    // >= 0; 0 gives a flat (unmeasurable) trochlea
    double condyle_width_mm = 26.0;  // outer medial-lateral width of the femur body
    double body_depth_mm = 12.0;     // anterior->posterior thickness behind the peaks
    std::array<double, 3> patella_semi_axes_mm{5.0, 3.0, 6.0};
    double patella_gap_mm = 2.5;     // peaks-to-patella separation
    double noise_level = 0.0;        // additive Gaussian sigma
    std::uint64_t seed = 0;

    void validate() const;
    /// Horizontal peak half-separation implied by angle and depth.
    double peak_half_width_mm() const;
};

struct GrooveLandmarks {
    int slice = -1;                          // axial (z) index
    std::array<double, 2> medial_peak_mm{};  // (x, y) world mm within the slice
    std::array<double, 2> lateral_peak_mm{};
    std::array<double, 2> trough_mm{};
};

struct GrooveMeasurement {
    bool measurable = false;
    double sulcus_angle_deg = 180.0; // in (0, 180]
    double groove_depth_mm = 0.0;    // >= 0
    GrooveLandmarks landmarks;
};

struct PhantomData {
    Volume volume;          // values in [0, 1]
    LabelVolume bone_labels; // 0 background, 1 femur, 2 patella
    GrooveMeasurement ground_truth; // analytic, at the central femur slice
};

PhantomData generate_phantom(const PhantomSpec& spec);

struct MeasureParams {
    int otsu_bins = 256;
    double min_depth_mm = 0.05; // below this the trochlea counts as flat
};

/// Automated sulcus angle / groove depth on one axial slice: threshold
/// (Otsu), keep the largest in-plane component, trace the anterior
/// surface per column with subvoxel interpolation, then take the facet
/// peaks and the trough between them. Flat or convex profiles yield an
/// unmeasurable result.
GrooveMeasurement measure_sulcus_angle(const Volume& v, int slice_index,
                                       const MeasureParams& params = {});

/// Slice with maximal patella cross-section (label 2); central slice if
/// no patella labels are present.
int choose_measurement_slice(const LabelVolume& labels);

} // namespace troch
