#include "troch/masking.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace troch {

void MaskSpec::validate() const {
    if (offset_mm <= 0.0) throw InvalidInput("mask spec: offset_mm must be positive");
    for (double a : fallback_semi_axes_mm)
        if (a <= 0.0) throw InvalidInput("mask spec: semi-axes must be positive");
    for (double c : fallback_center)
        if (c < 0.0 || c > 1.0)
            throw InvalidInput("mask spec: fallback center must be fractional in [0,1]");
}

StructuringElement StructuringElement::ellipsoid(std::array<double, 3> radius_mm,
                                                 Spacing spacing) {
    for (double r : radius_mm)
        if (r < 0.0) throw InvalidInput("structuring element: radius must be >= 0");

    std::array<int, 3> reach;
    for (int a = 0; a < 3; ++a)
        reach[a] = static_cast<int>(std::floor(radius_mm[a] / spacing[a]));

    StructuringElement se;
    for (int dz = -reach[2]; dz <= reach[2]; ++dz)
        for (int dy = -reach[1]; dy <= reach[1]; ++dy)
            for (int dx = -reach[0]; dx <= reach[0]; ++dx) {
                double d2 = 0.0;
                if (dx != 0) {
                    if (radius_mm[0] == 0.0) continue;
                    const double t = dx * spacing[0] / radius_mm[0];
                    d2 += t * t;
                }
                if (dy != 0) {
                    if (radius_mm[1] == 0.0) continue;
                    const double t = dy * spacing[1] / radius_mm[1];
                    d2 += t * t;
                }
                if (dz != 0) {
                    if (radius_mm[2] == 0.0) continue;
                    const double t = dz * spacing[2] / radius_mm[2];
                    d2 += t * t;
                }
                if (d2 <= 1.0) se.offsets.push_back({dx, dy, dz});
            }
    return se;
}

// ---------------------------------------------------------------------------
// Otsu

int otsu_cut_from_histogram(const std::vector<double>& counts) {
    const int bins = static_cast<int>(counts.size());
    if (bins < 2) throw InvalidInput("otsu: need at least 2 bins");

    double total = 0.0, total_moment = 0.0;
    for (int i = 0; i < bins; ++i) {
        if (counts[i] < 0.0) throw InvalidInput("otsu: negative histogram count");
        total += counts[i];
        total_moment += counts[i] * (i + 0.5);
    }
    if (total <= 0.0) throw InvalidInput("otsu: empty histogram");

    int best_cut = -1;
    double best_var = -1.0;
    double w0 = 0.0, m0 = 0.0;
    for (int k = 1; k < bins; ++k) {
        w0 += counts[k - 1];
        m0 += counts[k - 1] * (k - 0.5);
        const double w1 = total - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double mu0 = m0 / w0;
        const double mu1 = (total_moment - m0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_cut = k;
        }
    }
    if (best_cut < 0) throw InvalidInput("otsu: all mass in a single class");
    return best_cut;
}

float otsu_threshold(const Volume& v, int bins) {
    validate_volume(v);
    if (bins < 2) throw InvalidInput("otsu: bins must be >= 2");

    float vmin = v.data[0], vmax = v.data[0];
    for (float x : v.data) {
        vmin = std::min(vmin, x);
        vmax = std::max(vmax, x);
    }
    if (!(vmax > vmin)) throw InvalidInput("otsu: constant volume");

    std::vector<double> counts(bins, 0.0);
    const double scale = bins / (static_cast<double>(vmax) - vmin);
    for (float x : v.data) {
        int b = static_cast<int>((static_cast<double>(x) - vmin) * scale);
        if (b >= bins) b = bins - 1;
        counts[b] += 1.0;
    }
    const int cut = otsu_cut_from_histogram(counts);
    return static_cast<float>(vmin + cut * (static_cast<double>(vmax) - vmin) / bins);
}

// ---------------------------------------------------------------------------
// Morphology: set definitions, out-of-bounds reads as background (0).

namespace {

BinaryMask morph_apply(const BinaryMask& m, const StructuringElement& se, bool erode,
                       std::uint8_t oob) {
    const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
    BinaryMask out(m.dims, m.spacing);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                std::uint8_t acc = erode ? 1 : 0;
                for (const auto& o : se.offsets) {
                    const int px = x + o[0], py = y + o[1], pz = z + o[2];
                    std::uint8_t val = oob;
                    if (px >= 0 && px < nx && py >= 0 && py < ny && pz >= 0 && pz < nz)
                        val = m.at(px, py, pz);
                    if (erode) {
                        if (!val) {
                            acc = 0;
                            break;
                        }
                    } else {
                        if (val) {
                            acc = 1;
                            break;
                        }
                    }
                }
                out.at(x, y, z) = acc;
            }
    return out;
}

// Closing whose erosion reads out-of-bounds as foreground, so tissue
// touching the volume border is not clipped (the plain close would eat
// an SE-radius of every face).
BinaryMask close_border_padded(const BinaryMask& m, const StructuringElement& se) {
    return morph_apply(morph_apply(m, se, false, 0), se, true, 1);
}

} // namespace

BinaryMask morph_erode(const BinaryMask& m, const StructuringElement& se) {
    validate_mask(m);
    return morph_apply(m, se, true, 0);
}

BinaryMask morph_dilate(const BinaryMask& m, const StructuringElement& se) {
    validate_mask(m);
    return morph_apply(m, se, false, 0);
}

BinaryMask morph_open(const BinaryMask& m, const StructuringElement& se) {
    return morph_dilate(morph_erode(m, se), se);
}

BinaryMask morph_close(const BinaryMask& m, const StructuringElement& se) {
    return morph_erode(morph_dilate(m, se), se);
}

// ---------------------------------------------------------------------------
// Connected components

namespace {

const std::array<std::array<int, 3>, 6> kNeighbors6 = {{
    {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1},
}};

std::vector<std::array<int, 3>> neighbors26() {
    std::vector<std::array<int, 3>> n;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (dx || dy || dz) n.push_back({dx, dy, dz});
    return n;
}

// Components of equal nonzero values; returns per-voxel component id
// (-1 background) and the number of components. Ids are assigned in
// order of each component's smallest linear index.
int label_components(Dims dims, const std::vector<std::uint8_t>& values, int connectivity,
                     std::vector<int>& comp_id) {
    if (connectivity != 6 && connectivity != 26)
        throw InvalidInput("connected components: connectivity must be 6 or 26");
    const auto n26 = neighbors26();
    const std::size_t n_off = (connectivity == 6) ? kNeighbors6.size() : n26.size();
    auto offset = [&](std::size_t i) -> const std::array<int, 3>& {
        return (connectivity == 6) ? kNeighbors6[i] : n26[i];
    };

    const int nx = dims[0], ny = dims[1], nz = dims[2];
    comp_id.assign(values.size(), -1);
    int next_id = 0;
    std::deque<std::size_t> queue;

    for (std::size_t seed = 0; seed < values.size(); ++seed) {
        if (values[seed] == 0 || comp_id[seed] >= 0) continue;
        const int id = next_id++;
        comp_id[seed] = id;
        queue.push_back(seed);
        while (!queue.empty()) {
            const std::size_t cur = queue.front();
            queue.pop_front();
            const int x = static_cast<int>(cur % nx);
            const int y = static_cast<int>((cur / nx) % ny);
            const int z = static_cast<int>(cur / (static_cast<std::size_t>(nx) * ny));
            for (std::size_t i = 0; i < n_off; ++i) {
                const auto& o = offset(i);
                const int px = x + o[0], py = y + o[1], pz = z + o[2];
                if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 || pz >= nz) continue;
                const std::size_t pi = static_cast<std::size_t>(px) +
                                       static_cast<std::size_t>(nx) *
                                           (static_cast<std::size_t>(py) +
                                            static_cast<std::size_t>(ny) *
                                                static_cast<std::size_t>(pz));
                if (comp_id[pi] >= 0 || values[pi] == 0) continue;
                if (values[pi] != values[cur]) continue;
                comp_id[pi] = id;
                queue.push_back(pi);
            }
        }
    }
    return next_id;
}

} // namespace

BinaryMask largest_component(const BinaryMask& m, int connectivity) {
    validate_mask(m);
    std::vector<int> comp_id;
    const int n_comp = label_components(m.dims, m.data, connectivity, comp_id);
    if (n_comp == 0) throw InvalidInput("largest_component: empty mask");

    std::vector<std::size_t> counts(n_comp, 0);
    for (int id : comp_id)
        if (id >= 0) ++counts[id];

    // Ids were assigned in order of smallest linear index, so the first
    // maximal count is the required tie-break.
    int best = 0;
    for (int id = 1; id < n_comp; ++id)
        if (counts[id] > counts[best]) best = id;

    BinaryMask out(m.dims, m.spacing);
    for (std::size_t i = 0; i < comp_id.size(); ++i)
        out.data[i] = (comp_id[i] == best) ? 1 : 0;
    return out;
}

BackgroundResult segment_background(const Volume& v, const BackgroundParams& params) {
    validate_volume(v);
    const float thr = otsu_threshold(v, params.otsu_bins);

    BinaryMask fg(v.dims, v.spacing);
    for (std::size_t i = 0; i < v.data.size(); ++i) fg.data[i] = (v.data[i] > thr) ? 1 : 0;

    const auto se = StructuringElement::ellipsoid(
        {params.se_radius_mm, params.se_radius_mm, params.se_radius_mm}, v.spacing);
    fg = morph_open(fg, se);
    fg = close_border_padded(fg, se);
    fg = largest_component(fg, params.connectivity);

    BackgroundResult res;
    res.cleaned = v;
    for (std::size_t i = 0; i < fg.data.size(); ++i)
        if (!fg.data[i]) res.cleaned.data[i] = 0.0f;
    res.foreground = std::move(fg);
    return res;
}

PatellaResult localize_patella(const LabelVolume& labels, const PatellaParams& params) {
    PatellaResult res;
    res.patella = BinaryMask(labels.dims, labels.spacing);

    std::vector<int> comp_id;
    const int n_comp = label_components(labels.dims, labels.data, params.connectivity, comp_id);
    if (n_comp == 0) return res; // empty label input -> not found

    std::vector<std::size_t> counts(n_comp, 0);
    std::vector<double> y_sum(n_comp, 0.0);
    const int nx = labels.dims[0], ny = labels.dims[1];
    for (std::size_t i = 0; i < comp_id.size(); ++i) {
        const int id = comp_id[i];
        if (id < 0) continue;
        ++counts[id];
        y_sum[id] += static_cast<double>((i / nx) % ny);
    }

    const double voxel_cm3 =
        labels.spacing[0] * labels.spacing[1] * labels.spacing[2] / 1000.0;
    int best = -1;
    double best_y = std::numeric_limits<double>::infinity();
    for (int id = 0; id < n_comp; ++id) {
        const double vol = counts[id] * voxel_cm3;
        if (vol < params.min_volume_cm3 || vol > params.max_volume_cm3) continue;
        const double cy = y_sum[id] / counts[id];
        if (cy < best_y) { // strict: ties keep the earlier (smaller seed index) component
            best_y = cy;
            best = id;
        }
    }
    if (best < 0) return res;

    res.found = true;
    for (std::size_t i = 0; i < comp_id.size(); ++i)
        res.patella.data[i] = (comp_id[i] == best) ? 1 : 0;
    return res;
}

BinaryMask bowl_mask(const BinaryMask& patella, const MaskSpec& spec) {
    validate_mask(patella);
    spec.validate();
    if (patella.count() == 0) throw InvalidInput("bowl_mask: empty patella mask");

    const auto se = StructuringElement::ellipsoid(
        {spec.offset_mm, spec.offset_mm, spec.offset_mm}, patella.spacing);

    const int nx = patella.dims[0], ny = patella.dims[1], nz = patella.dims[2];
    BinaryMask out(patella.dims, patella.spacing);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!patella.at(x, y, z)) continue;
                for (const auto& o : se.offsets) {
                    const int px = x + o[0], py = y + o[1], pz = z + o[2];
                    if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 || pz >= nz)
                        continue;
                    out.at(px, py, pz) = 1;
                }
            }
    // The patella itself stays visible to condition the model.
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (patella.data[i]) out.data[i] = 0;
    return out;
}

BinaryMask ellipsoid_mask(Dims dims, Spacing spacing, const MaskSpec& spec) {
    spec.validate();
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw InvalidInput("ellipsoid_mask: dims must be positive");

    // Voxel centers at (i + 0.5) * spacing; ellipsoid center at the
    // fractional position of the volume's world extent.
    std::array<double, 3> center;
    for (int a = 0; a < 3; ++a) center[a] = spec.fallback_center[a] * dims[a] * spacing[a];

    BinaryMask out(dims, spacing);
    std::size_t n_set = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const double dx = ((x + 0.5) * spacing[0] - center[0]) / spec.fallback_semi_axes_mm[0];
                const double dy = ((y + 0.5) * spacing[1] - center[1]) / spec.fallback_semi_axes_mm[1];
                const double dz = ((z + 0.5) * spacing[2] - center[2]) / spec.fallback_semi_axes_mm[2];
                if (dx * dx + dy * dy + dz * dz <= 1.0) {
                    out.at(x, y, z) = 1;
                    ++n_set;
                }
            }

    if (n_set == 0) {
        // Distinguish a tiny in-grid ellipsoid (valid, empty) from one
        // whose extent misses the grid entirely.
        bool outside = false;
        for (int a = 0; a < 3; ++a) {
            const double extent = dims[a] * spacing[a];
            if (center[a] + spec.fallback_semi_axes_mm[a] < 0.0 ||
                center[a] - spec.fallback_semi_axes_mm[a] > extent)
                outside = true;
        }
        if (outside) throw InvalidInput("ellipsoid_mask: ellipsoid entirely outside grid");
    }
    return out;
}

} // namespace troch
