#pragma once

#include "troch/volume.hpp"

#include <vector>

namespace troch {

/// Mean of (a-b)^2 over mask voxels.
double masked_mse(const Volume& a, const Volume& b, const BinaryMask& m);

/// -10 log10(mse) with data range 1.0; +infinity when mse is 0.
double masked_psnr(const Volume& a, const Volume& b, const BinaryMask& m);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Full per-voxel 3D SSIM map (Gaussian window, zero extension at the
/// borders). Requires every dim >= window.
Volume ssim_map(const Volume& a, const Volume& b, const SsimParams& params = {});

/// Zero all non-mask voxels of both volumes, compute the full SSIM map,
/// and average it over the mask voxels.
double masked_ssim(const Volume& a, const Volume& b, const BinaryMask& m,
                   const SsimParams& params = {});

struct MetricReport {
    double mse = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    std::size_t mask_voxels = 0;
};

MetricReport evaluate_masked(const Volume& pred, const Volume& ref, const BinaryMask& m);

struct AggregateStats {
    double mean = 0.0;
    double stddev = 0.0; // population standard deviation
};

struct AggregateReport {
    int count = 0;
    AggregateStats mse, psnr_db, ssim;
};

AggregateReport aggregate_reports(const std::vector<MetricReport>& reports);

struct WilcoxonResult {
    int n = 0;            // pairs used after dropping zero differences
    double w_plus = 0.0;  // rank sum of positive differences (after - before)
    double w_minus = 0.0;
    bool exact = false;   // exact enumeration (n <= 12) vs normal approximation
    double p_two_sided = 1.0;
    double p_greater = 1.0; // alternative: after > before
    double p_less = 1.0;    // alternative: after < before
};

/// Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped and ties are mid-ranked; p-values are exact by enumeration of
/// sign assignments for n <= 12 and use the tie-corrected normal
/// approximation above that. All differences zero is an error.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& before,
                                    const std::vector<double>& after);

} // namespace troch
