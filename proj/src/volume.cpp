#include "troch/volume.hpp"

#include <cmath>

namespace troch {

void validate_volume(const Volume& v, const std::string& what) {
    if (v.dims[0] <= 0 || v.dims[1] <= 0 || v.dims[2] <= 0)
        throw InvalidInput(what + ": dims must be positive");
    if (v.spacing[0] <= 0.0 || v.spacing[1] <= 0.0 || v.spacing[2] <= 0.0)
        throw InvalidInput(what + ": spacing must be positive");
    if (v.data.size() != Volume::voxel_count(v.dims))
        throw InvalidInput(what + ": data length does not match dims");
    for (float f : v.data) {
        if (!std::isfinite(f)) throw InvalidInput(what + ": non-finite value");
    }
}

void validate_mask(const BinaryMask& m, const std::string& what) {
    if (m.dims[0] <= 0 || m.dims[1] <= 0 || m.dims[2] <= 0)
        throw InvalidInput(what + ": dims must be positive");
    if (m.data.size() != Volume::voxel_count(m.dims))
        throw InvalidInput(what + ": data length does not match dims");
    for (auto v : m.data) {
        if (v > 1) throw InvalidInput(what + ": values must be 0 or 1");
    }
}

void require_same_grid(const Volume& v, const BinaryMask& m) {
    if (v.dims != m.dims) throw InvalidInput("volume/mask dims mismatch");
    if (v.spacing != m.spacing) throw InvalidInput("volume/mask spacing mismatch");
}

Volume mask_to_volume(const BinaryMask& m) {
    Volume out(m.dims, m.spacing);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        out.data[i] = m.data[i] ? 1.0f : 0.0f;
    return out;
}

Volume apply_mask(const Volume& v, const BinaryMask& m) {
    require_same_grid(v, m);
    Volume out = v;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (m.data[i]) out.data[i] = 0.0f;
    }
    return out;
}

} // namespace troch
