#pragma once

#include "troch/volume.hpp"

#include <array>
#include <string>
#include <vector>

namespace troch {

// Subband letters read (z, y, x): band index b = 4*hz + 2*hy + hx where
// h* = 1 selects the high-pass filter along that axis.
inline constexpr std::array<const char*, 8> kBandNames = {
    "lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh",
};

// The four bands carrying the L1 sparsity penalty during training.
inline constexpr std::array<int, 4> kHighFreqLossBands = {3, 5, 6, 7}; // lhh, hlh, hhl, hhh

/// One level of 3D Haar coefficients: eight half-resolution subbands in
/// x-fastest order, plus the source volume's spacing.
struct WaveletCoeffs {
    Dims band_dims{0, 0, 0};              // each band is (nx/2, ny/2, nz/2)
    Spacing source_spacing{1.0, 1.0, 1.0};
    std::array<std::vector<float>, 8> bands;

    WaveletCoeffs() = default;
    WaveletCoeffs(Dims bd, Spacing sp) : band_dims(bd), source_spacing(sp) {
        for (auto& b : bands) b.assign(Volume::voxel_count(bd), 0.0f);
    }

    std::size_t band_size() const { return Volume::voxel_count(band_dims); }
    std::size_t total_size() const { return 8 * band_size(); }

    bool same_shape(const WaveletCoeffs& o) const { return band_dims == o.band_dims; }
};

/// Single-level orthonormal Haar DWT, separable along x then y then z.
/// Each 1D step maps pairs (a,b) -> ((a+b)/sqrt2, (a-b)/sqrt2). All dims
/// must be even.
WaveletCoeffs dwt3(const Volume& v);

/// Exact inverse of dwt3 up to floating round-off.
Volume idwt3(const WaveletCoeffs& c);

void validate_coeffs(const WaveletCoeffs& c, const std::string& what = "coefficients");

// Concatenated 8-channel raw file (band order as in kBandNames) with a
// JSON sidecar; used for checkpoint debugging dumps.
void save_coeffs(const WaveletCoeffs& c, const std::string& path);
WaveletCoeffs load_coeffs(const std::string& path);

} // namespace troch
