#include "troch/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace troch {

void PreprocessConfig::validate() const {
    if (target_spacing[0] <= 0.0 || target_spacing[1] <= 0.0 || target_spacing[2] <= 0.0)
        throw InvalidInput("preprocess: target spacing must be positive");
    if (target_dims[0] <= 0 || target_dims[1] <= 0 || target_dims[2] <= 0)
        throw InvalidInput("preprocess: target dims must be positive");
    if (clip_low_pct < 0.0 || clip_low_pct >= 100.0 || clip_high_pct < 0.0 ||
        clip_high_pct >= 100.0)
        throw InvalidInput("preprocess: percentiles must lie in [0, 100)");
    if (clip_low_pct >= clip_high_pct)
        throw InvalidInput("preprocess: clip_low_pct must be below clip_high_pct");
}

Volume resample_trilinear(const Volume& v, Spacing target_spacing) {
    validate_volume(v);
    if (target_spacing[0] <= 0.0 || target_spacing[1] <= 0.0 || target_spacing[2] <= 0.0)
        throw InvalidInput("resample: target spacing must be positive");

    if (target_spacing == v.spacing) return v;

    Dims out_dims;
    for (int a = 0; a < 3; ++a) {
        const double extent = v.dims[a] * v.spacing[a];
        out_dims[a] = std::max(1, static_cast<int>(std::llround(extent / target_spacing[a])));
    }

    Volume out(out_dims, target_spacing);

    // Voxel centers: world position of index i along axis a is (i + 0.5) * spacing.
    std::array<double, 3> scale;
    for (int a = 0; a < 3; ++a) scale[a] = target_spacing[a] / v.spacing[a];

    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    auto clampi = [](int i, int hi) { return i < 0 ? 0 : (i > hi ? hi : i); };

    for (int z = 0; z < out_dims[2]; ++z) {
        const double wz = (z + 0.5) * scale[2] - 0.5;
        const int z0 = clampi(static_cast<int>(std::floor(wz)), nz - 1);
        const int z1 = std::min(z0 + 1, nz - 1);
        const double fz = std::clamp(wz - z0, 0.0, 1.0);
        for (int y = 0; y < out_dims[1]; ++y) {
            const double wy = (y + 0.5) * scale[1] - 0.5;
            const int y0 = clampi(static_cast<int>(std::floor(wy)), ny - 1);
            const int y1 = std::min(y0 + 1, ny - 1);
            const double fy = std::clamp(wy - y0, 0.0, 1.0);
            for (int x = 0; x < out_dims[0]; ++x) {
                const double wx = (x + 0.5) * scale[0] - 0.5;
                const int x0 = clampi(static_cast<int>(std::floor(wx)), nx - 1);
                const int x1 = std::min(x0 + 1, nx - 1);
                const double fx = std::clamp(wx - x0, 0.0, 1.0);

                const double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
                const double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
                const double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
                const double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);

                const double c00 = c000 * (1.0 - fx) + c100 * fx;
                const double c10 = c010 * (1.0 - fx) + c110 * fx;
                const double c01 = c001 * (1.0 - fx) + c101 * fx;
                const double c11 = c011 * (1.0 - fx) + c111 * fx;
                const double c0 = c00 * (1.0 - fy) + c10 * fy;
                const double c1 = c01 * (1.0 - fy) + c11 * fy;
                out.at(x, y, z) = static_cast<float>(c0 * (1.0 - fz) + c1 * fz);
            }
        }
    }
    return out;
}

Volume center_crop_pad(const Volume& v, Dims target_dims) {
    validate_volume(v);
    if (target_dims[0] <= 0 || target_dims[1] <= 0 || target_dims[2] <= 0)
        throw InvalidInput("center_crop_pad: target dims must be positive");

    if (target_dims == v.dims) return v;

    // src_off: first kept input index; dst_off: where it lands in the output.
    Dims src_off{}, dst_off{}, span{};
    for (int a = 0; a < 3; ++a) {
        if (v.dims[a] >= target_dims[a]) {
            src_off[a] = (v.dims[a] - target_dims[a]) / 2;
            dst_off[a] = 0;
            span[a] = target_dims[a];
        } else {
            src_off[a] = 0;
            dst_off[a] = (target_dims[a] - v.dims[a]) / 2;
            span[a] = v.dims[a];
        }
    }

    Volume out(target_dims, v.spacing);
    for (int z = 0; z < span[2]; ++z)
        for (int y = 0; y < span[1]; ++y)
            for (int x = 0; x < span[0]; ++x)
                out.at(dst_off[0] + x, dst_off[1] + y, dst_off[2] + z) =
                    v.at(src_off[0] + x, src_off[1] + y, src_off[2] + z);
    return out;
}

float percentile_nearest_rank(const Volume& v, double pct) {
    if (v.data.empty()) throw InvalidInput("percentile: empty volume");
    if (pct < 0.0 || pct >= 100.0) throw InvalidInput("percentile: pct must be in [0, 100)");
    std::vector<float> sorted(v.data);
    const std::size_t n = sorted.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
    return sorted[rank - 1];
}

NormalizeResult clip_normalize(const Volume& v, const PreprocessConfig& cfg) {
    validate_volume(v);
    cfg.validate();

    const float lo = percentile_nearest_rank(v, cfg.clip_low_pct);
    const float hi = percentile_nearest_rank(v, cfg.clip_high_pct);

    NormalizeResult res;
    res.volume = Volume(v.dims, v.spacing);
    if (!(hi > lo)) {
        res.degenerate = true; // constant (or effectively constant) input
        return res;
    }
    const double inv = 1.0 / (static_cast<double>(hi) - static_cast<double>(lo));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float c = std::clamp(v.data[i], lo, hi);
        res.volume.data[i] = static_cast<float>((c - lo) * inv);
    }
    return res;
}

NormalizeResult preprocess(const Volume& v, const PreprocessConfig& cfg) {
    cfg.validate();
    Volume r = resample_trilinear(v, cfg.target_spacing);
    Volume c = center_crop_pad(r, cfg.target_dims);
    return clip_normalize(c, cfg);
}

} // namespace troch
