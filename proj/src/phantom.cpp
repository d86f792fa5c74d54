#include "troch/phantom.hpp"

#include "troch/masking.hpp"
#include "troch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace troch {

namespace {

constexpr double kAirIntensity = 0.02;
constexpr double kSoftIntensity = 0.15;
constexpr double kFemurIntensity = 0.80;
constexpr double kPatellaIntensity = 0.90;
constexpr double kOuterWallSlope = 1.7; // posterior drop beyond the facet peaks
constexpr double kWallMarginMm = 2.0;   // required condyle shoulder beyond each peak

double deg2rad(double d) { return d * M_PI / 180.0; }
double rad2deg(double r) { return r * 180.0 / M_PI; }

// Linear edge ramp: 0 outside, 1 inside, transition of `width` centered
// on the boundary. Signed distance is positive inside.
double ramp(double signed_dist, double width) {
    return std::clamp(signed_dist / width + 0.5, 0.0, 1.0);
}

} // namespace

double PhantomSpec::peak_half_width_mm() const {
    if (groove_depth_mm <= 0.0) return 0.0;
    return groove_depth_mm * std::tan(deg2rad(sulcus_angle_deg / 2.0));
}

void PhantomSpec::validate() const {
    if (dims[0] < 8 || dims[1] < 8 || dims[2] < 2)
        throw InvalidInput("phantom: dims too small");
    if (spacing[0] <= 0.0 || spacing[1] <= 0.0 || spacing[2] <= 0.0)
        throw InvalidInput("phantom: spacing must be positive");
    if (!(sulcus_angle_deg > 90.0) || !(sulcus_angle_deg < 180.0))
        throw InvalidInput("phantom: sulcus angle must lie in (90, 180) degrees");
    if (groove_depth_mm < 0.0) throw InvalidInput("phantom: groove depth must be >= 0");
    if (condyle_width_mm <= 0.0 || body_depth_mm <= 0.0)
        throw InvalidInput("phantom: condyle width and body depth must be positive");
    for (double a : patella_semi_axes_mm)
        if (a <= 0.0) throw InvalidInput("phantom: patella semi-axes must be positive");
    if (patella_gap_mm < 0.0) throw InvalidInput("phantom: patella gap must be >= 0");
    if (noise_level < 0.0) throw InvalidInput("phantom: noise level must be >= 0");

    const double w = peak_half_width_mm();
    if (2.0 * (w + kWallMarginMm) > condyle_width_mm)
        throw InvalidInput("phantom: groove too wide for the condyle "
                           "(depth not achievable at this angle and width)");

    // The groove, patella and femur body have to fit the world extent.
    const double ey = dims[1] * spacing[1];
    const double anterior_margin = 1.5;
    const double y_back = anterior_margin + 2.0 * patella_semi_axes_mm[1] +
                          patella_gap_mm + groove_depth_mm + body_depth_mm;
    if (y_back + 1.0 > ey)
        throw InvalidInput("phantom: geometry does not fit the volume along y");
    if (condyle_width_mm + 4.0 > dims[0] * spacing[0])
        throw InvalidInput("phantom: condyle width does not fit the volume along x");
}

PhantomData generate_phantom(const PhantomSpec& spec) {
    spec.validate();

    const double ex = spec.dims[0] * spec.spacing[0];
    const double ey = spec.dims[1] * spec.spacing[1];
    const double ez = spec.dims[2] * spec.spacing[2];
    const double xc = ex / 2.0;
    const double zc = ez / 2.0;

    const double anterior_margin = 1.5;
    const double pat_cy = anterior_margin + spec.patella_semi_axes_mm[1];
    const double y_pk = pat_cy + spec.patella_semi_axes_mm[1] + spec.patella_gap_mm;
    const double y_trough = y_pk + spec.groove_depth_mm;
    const double y_back = y_trough + spec.body_depth_mm;
    const double w = spec.peak_half_width_mm();
    const double half_width = spec.condyle_width_mm / 2.0;

    const double femur_half_z = 0.45 * ez;
    const double leg_semi_x = ex / 2.0 - 1.0;
    const double leg_semi_y = ey / 2.0 - 1.0;

    // Anterior femoral surface per in-slice x (mm); +inf outside the body.
    auto surface_y = [&](double x_mm) -> double {
        const double u = std::abs(x_mm - xc);
        if (u > half_width) return std::numeric_limits<double>::infinity();
        if (spec.groove_depth_mm <= 0.0 || w <= 0.0) return y_pk;
        if (u <= w) return y_pk + spec.groove_depth_mm * (1.0 - u / w);
        return y_pk + kOuterWallSlope * (u - w);
    };

    // Two-pitch intensity ramp along y so threshold crossings interpolate
    // linearly between in-ramp samples (subvoxel surface recovery).
    const double edge_y = 2.0 * spec.spacing[1];
    const double edge_x = spec.spacing[0];
    const double edge_z = spec.spacing[2];

    PhantomData out;
    out.volume = Volume(spec.dims, spec.spacing);
    out.bone_labels = LabelVolume(spec.dims, spec.spacing);
    Rng rng(spec.seed);

    for (int z = 0; z < spec.dims[2]; ++z) {
        const double zmm = (z + 0.5) * spec.spacing[2];
        const double cov_fz = std::min(ramp(zmm - (zc - femur_half_z), edge_z),
                                       ramp((zc + femur_half_z) - zmm, edge_z));
        for (int y = 0; y < spec.dims[1]; ++y) {
            const double ymm = (y + 0.5) * spec.spacing[1];
            for (int x = 0; x < spec.dims[0]; ++x) {
                const double xmm = (x + 0.5) * spec.spacing[0];

                // Soft-tissue cylinder.
                const double lx = (xmm - xc) / leg_semi_x;
                const double ly = (ymm - ey / 2.0) / leg_semi_y;
                const double leg_rho = std::sqrt(lx * lx + ly * ly);
                const double cov_leg = ramp((1.0 - leg_rho) * std::min(leg_semi_x, leg_semi_y),
                                            std::max(edge_x, edge_y));

                // Femur body between the anterior surface and the back plane.
                const double ys = surface_y(xmm);
                double cov_fem = 0.0;
                if (std::isfinite(ys)) {
                    cov_fem = std::min({ramp(ymm - ys, edge_y), ramp(y_back - ymm, edge_y),
                                        ramp(half_width - std::abs(xmm - xc), edge_x),
                                        cov_fz});
                }

                // Patella ellipsoid.
                const double px = (xmm - xc) / spec.patella_semi_axes_mm[0];
                const double py = (ymm - pat_cy) / spec.patella_semi_axes_mm[1];
                const double pz = (zmm - zc) / spec.patella_semi_axes_mm[2];
                const double pat_rho = std::sqrt(px * px + py * py + pz * pz);
                const double min_axis =
                    *std::min_element(spec.patella_semi_axes_mm.begin(),
                                      spec.patella_semi_axes_mm.end());
                const double cov_pat = ramp((1.0 - pat_rho) * min_axis, edge_y);

                double v = kAirIntensity;
                v += (kSoftIntensity - v) * cov_leg;
                v += (kFemurIntensity - v) * cov_fem;
                v += (kPatellaIntensity - v) * cov_pat;
                if (spec.noise_level > 0.0) v += spec.noise_level * rng.gaussian();
                out.volume.at(x, y, z) = static_cast<float>(std::clamp(v, 0.0, 1.0));

                if (cov_pat >= 0.5)
                    out.bone_labels.at(x, y, z) = 2;
                else if (cov_fem >= 0.5)
                    out.bone_labels.at(x, y, z) = 1;
            }
        }
    }

    GrooveMeasurement& gt = out.ground_truth;
    gt.measurable = spec.groove_depth_mm > 0.0;
    gt.sulcus_angle_deg = spec.sulcus_angle_deg;
    gt.groove_depth_mm = spec.groove_depth_mm;
    gt.landmarks.slice = spec.dims[2] / 2;
    gt.landmarks.medial_peak_mm = {xc - w, y_pk};
    gt.landmarks.lateral_peak_mm = {xc + w, y_pk};
    gt.landmarks.trough_mm = {xc, y_trough};
    return out;
}

// ---------------------------------------------------------------------------
// Measurement

GrooveMeasurement measure_sulcus_angle(const Volume& v, int slice_index,
                                       const MeasureParams& params) {
    validate_volume(v);
    if (slice_index < 0 || slice_index >= v.dims[2])
        throw InvalidInput("measure: slice index out of range");

    const int nx = v.dims[0], ny = v.dims[1];
    Volume slice({nx, ny, 1}, v.spacing);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) slice.at(x, y, 0) = v.at(x, y, slice_index);

    GrooveMeasurement res;
    res.landmarks.slice = slice_index;

    float thr;
    try {
        thr = otsu_threshold(slice, params.otsu_bins);
    } catch (const InvalidInput&) {
        return res; // constant slice: nothing to measure
    }

    BinaryMask bone(slice.dims, slice.spacing);
    bool any = false;
    for (std::size_t i = 0; i < slice.data.size(); ++i) {
        bone.data[i] = (slice.data[i] > thr) ? 1 : 0;
        any |= bone.data[i] != 0;
    }
    if (!any) return res;
    bone = largest_component(bone, 26);

    // Anterior surface: first bone voxel per column (smallest y), with a
    // subvoxel crossing estimate from the intensity ramp.
    std::vector<double> profile(nx, std::numeric_limits<double>::quiet_NaN());
    for (int x = 0; x < nx; ++x) {
        for (int y = 0; y < ny; ++y) {
            if (!bone.at(x, y, 0)) continue;
            double y_sub = static_cast<double>(y);
            if (y > 0) {
                const double below = slice.at(x, y - 1, 0);
                const double above = slice.at(x, y, 0);
                if (above > below) {
                    const double frac =
                        std::clamp((thr - below) / (above - below), 0.0, 1.0);
                    y_sub = (y - 1) + frac;
                }
            }
            profile[x] = y_sub;
            break;
        }
    }

    // Longest contiguous run of columns with a surface.
    int best_lo = -1, best_len = 0;
    for (int x = 0; x < nx;) {
        if (std::isnan(profile[x])) {
            ++x;
            continue;
        }
        int lo = x;
        while (x < nx && !std::isnan(profile[x])) ++x;
        if (x - lo > best_len) {
            best_len = x - lo;
            best_lo = lo;
        }
    }
    if (best_len < 3) return res; // too narrow for peaks + trough

    const int x_lo = best_lo, x_hi = best_lo + best_len - 1;
    const int x_mid = (x_lo + x_hi) / 2;

    // Facet peaks: most anterior point per half (medial scans inward from
    // the left, lateral from the right, so symmetric profiles stay
    // symmetric).
    int medial = x_lo;
    for (int x = x_lo; x <= x_mid; ++x)
        if (profile[x] < profile[medial]) medial = x;
    int lateral = x_hi;
    for (int x = x_hi; x > x_mid; --x)
        if (profile[x] < profile[lateral]) lateral = x;
    if (lateral - medial < 2) return res;

    // Trough: least anterior point strictly between the peaks.
    int trough = medial + 1;
    for (int x = medial + 1; x < lateral; ++x)
        if (profile[x] > profile[trough]) trough = x;

    const double sx = v.spacing[0], sy = v.spacing[1];
    auto to_mm = [&](int x, double y_sub) -> std::array<double, 2> {
        return {(x + 0.5) * sx, (y_sub + 0.5) * sy};
    };
    const auto pm = to_mm(medial, profile[medial]);
    const auto pl = to_mm(lateral, profile[lateral]);
    const auto pt = to_mm(trough, profile[trough]);

    // Signed distance from the trough to the peak-to-peak chord
    // (positive when the trough lies posterior of it).
    const double cx = pl[0] - pm[0], cy = pl[1] - pm[1];
    const double chord = std::hypot(cx, cy);
    if (chord <= 0.0) return res;
    const double depth = (cx * (pt[1] - pm[1]) - cy * (pt[0] - pm[0])) / chord;
    if (depth < params.min_depth_mm) return res; // flat or convex

    const double ax = pm[0] - pt[0], ay = pm[1] - pt[1];
    const double bx = pl[0] - pt[0], by = pl[1] - pt[1];
    const double cosang = (ax * bx + ay * by) / (std::hypot(ax, ay) * std::hypot(bx, by));
    res.sulcus_angle_deg = rad2deg(std::acos(std::clamp(cosang, -1.0, 1.0)));
    res.groove_depth_mm = depth;
    res.landmarks.medial_peak_mm = pm;
    res.landmarks.lateral_peak_mm = pl;
    res.landmarks.trough_mm = pt;
    res.measurable = true;
    return res;
}

int choose_measurement_slice(const LabelVolume& labels) {
    const int nz = labels.dims[2];
    std::vector<std::size_t> patella_area(nz, 0);
    const std::size_t per_slice =
        static_cast<std::size_t>(labels.dims[0]) * labels.dims[1];
    for (int z = 0; z < nz; ++z) {
        for (std::size_t i = 0; i < per_slice; ++i)
            if (labels.data[static_cast<std::size_t>(z) * per_slice + i] == 2)
                ++patella_area[z];
    }
    int best = -1;
    for (int z = 0; z < nz; ++z)
        if (patella_area[z] > 0 && (best < 0 || patella_area[z] > patella_area[best]))
            best = z;
    return best >= 0 ? best : nz / 2;
}

} // namespace troch
