#pragma once

#include "troch/volume.hpp"

#include <string>

namespace troch {

// Raw volume format: `<name>.vol` holds little-endian IEEE-754 32-bit
// floats in x-fastest order; `<name>.json` is the sidecar with dims,
// spacing, dtype and order. Masks use the same layout with values {0,1};
// label maps use the u8 variant.

void save_raw(const Volume& v, const std::string& vol_path);
Volume load_raw(const std::string& vol_path);

void save_mask(const BinaryMask& m, const std::string& vol_path);
BinaryMask load_mask(const std::string& vol_path);

void save_labels(const LabelVolume& l, const std::string& vol_path);
LabelVolume load_labels(const std::string& vol_path);

/// Reads an uncompressed single-file NIfTI-1 volume (.nii). Supports 3D
/// int16 and float32 data; values are scaled by scl_slope/scl_inter when
/// scl_slope is nonzero. Little-endian files only.
Volume load_nifti1(const std::string& path);

/// FNV-1a 64-bit hash of a file's bytes, for run logs.
std::uint64_t file_hash(const std::string& path);

} // namespace troch
