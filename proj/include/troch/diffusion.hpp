#pragma once

#include "troch/rng.hpp"
#include "troch/volume.hpp"
#include "troch/wavelet.hpp"

#include <functional>
#include <vector>

namespace troch {

/// Forward-process variance tables. Index t runs 1..T; alpha_bar(0) is 1
/// by convention.
class NoiseSchedule {
public:
    static NoiseSchedule from_betas(std::vector<double> betas);

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { check_t(t); return beta_[t - 1]; }
    double alpha(int t) const { check_t(t); return 1.0 - beta_[t - 1]; }
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        check_t(t);
        return alpha_bar_[t - 1];
    }

private:
    void check_t(int t) const {
        if (t < 1 || t > steps())
            throw InvalidInput("schedule: timestep " + std::to_string(t) + " out of range");
    }
    std::vector<double> beta_;
    std::vector<double> alpha_bar_;
};

/// beta[t] = beta_start + (t-1)/(T-1) * (beta_end - beta_start).
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

/// Network input: noisy coefficients plus the wavelet transforms of the
/// masked image and the mask (24 channels when concatenated).
struct ConditionedInput {
    const WaveletCoeffs* x_t = nullptr;
    const WaveletCoeffs* cond_m1 = nullptr;
    const WaveletCoeffs* cond_m2 = nullptr;
    int t = 0;

    void validate() const;
};

/// Anything that predicts clean coefficients from a conditioned input.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual WaveletCoeffs predict(const ConditionedInput& input) const = 0;
};

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps, elementwise.
WaveletCoeffs q_sample(const WaveletCoeffs& x0, int t, const WaveletCoeffs& eps,
                       const NoiseSchedule& s);

struct PosteriorParams {
    WaveletCoeffs mu;
    double beta_tilde = 0.0;
};

/// Posterior mean/variance of x_{t-1} given (x_t, predicted x0).
PosteriorParams posterior_params(const WaveletCoeffs& x_t, const WaveletCoeffs& x0_hat,
                                 int t, const NoiseSchedule& s);

/// One reverse step: mu + sqrt(beta_tilde) * z. The final step (t = 1)
/// is deterministic.
WaveletCoeffs p_sample_step(const WaveletCoeffs& x_t, const WaveletCoeffs& x0_hat, int t,
                            const NoiseSchedule& s, Rng& rng);

/// Standard-normal coefficients drawn band-major, x-fastest.
WaveletCoeffs gaussian_coeffs(Dims band_dims, Spacing source_spacing, Rng& rng);

struct SamplerConfig {
    bool clamp_x0 = false; // optional stability clamp, off by default
    double clamp_lo = -4.0;
    double clamp_hi = 4.0;
    int snapshot_every = 0; // dump x_t every k steps when > 0
    std::function<void(int, const WaveletCoeffs&)> snapshot_sink;
};

/// Full conditional inpainting: run the reverse chain in the wavelet
/// domain conditioned on DWT(masked image) and DWT(mask), reconstruct,
/// and composite so voxels outside the mask stay bit-identical.
Volume inpaint(const Volume& pathological, const BinaryMask& mask, const Denoiser& denoiser,
               const NoiseSchedule& s, Rng& rng, const SamplerConfig& cfg = {});

} // namespace troch
