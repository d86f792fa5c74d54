#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace troch {

// Thrown when an input violates a documented precondition (bad arguments,
// malformed files, inconsistent grids). The CLI maps this to exit code 1.
struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Any other failure during processing. The CLI maps this to exit code 2.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

using Dims = std::array<int, 3>;       // nx, ny, nz
using Spacing = std::array<double, 3>; // mm per voxel along x, y, z

/// 3D scalar field with anisotropic voxel spacing. Values are stored as
/// 32-bit floats in x-fastest (z-slowest) linear order.
struct Volume {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<float> data;

    Volume() = default;
    Volume(Dims d, Spacing s) : dims(d), spacing(s), data(voxel_count(d), 0.0f) {}

    static std::size_t voxel_count(Dims d) {
        return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) *
               static_cast<std::size_t>(d[2]);
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }

    float at(int x, int y, int z) const { return data[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data[index(x, y, z)]; }

    bool same_grid(const Volume& other) const {
        return dims == other.dims && spacing == other.spacing;
    }
};

/// Binary mask on the grid of an associated Volume; data is exactly {0,1}.
struct BinaryMask {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(Dims d, Spacing s) : dims(d), spacing(s), data(Volume::voxel_count(d), 0) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }

    std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
    std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
};

/// Integer label map (e.g. bone labels: 0 background, 1 femur, 2 patella).
struct LabelVolume {
    Dims dims{0, 0, 0};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> data;

    LabelVolume() = default;
    LabelVolume(Dims d, Spacing s) : dims(d), spacing(s), data(Volume::voxel_count(d), 0) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
    }

    std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
    std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

// Validation helpers. Throw InvalidInput on violation.
void validate_volume(const Volume& v, const std::string& what = "volume");
void validate_mask(const BinaryMask& m, const std::string& what = "mask");
void require_same_grid(const Volume& v, const BinaryMask& m);

/// Mask as a float volume (0.0/1.0) on the same grid.
Volume mask_to_volume(const BinaryMask& m);

/// m1 = v * (1 - m): masked voxels zeroed, everything else bit-identical.
Volume apply_mask(const Volume& v, const BinaryMask& m);

} // namespace troch
