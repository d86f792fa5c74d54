#include "troch/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace troch {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw InvalidInput("schedule: need at least one beta");
    for (double b : betas)
        if (!(b >= 0.0) || b >= 1.0)
            throw InvalidInput("schedule: betas must lie in [0, 1)");
    NoiseSchedule s;
    s.alpha_bar_.resize(betas.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        prod *= 1.0 - betas[i];
        s.alpha_bar_[i] = prod;
    }
    s.beta_ = std::move(betas);
    return s;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw InvalidInput("schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw InvalidInput("schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(T);
    for (int t = 1; t <= T; ++t)
        betas[t - 1] = (T == 1) ? beta_start
                                : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    return NoiseSchedule::from_betas(std::move(betas));
}

void ConditionedInput::validate() const {
    if (!x_t || !cond_m1 || !cond_m2)
        throw InvalidInput("conditioned input: missing coefficient set");
    if (!x_t->same_shape(*cond_m1) || !x_t->same_shape(*cond_m2))
        throw InvalidInput("conditioned input: coefficient dims mismatch");
    if (t < 1) throw InvalidInput("conditioned input: timestep must be >= 1");
}

WaveletCoeffs q_sample(const WaveletCoeffs& x0, int t, const WaveletCoeffs& eps,
                       const NoiseSchedule& s) {
    if (!x0.same_shape(eps)) throw InvalidInput("q_sample: x0/eps dims mismatch");
    if (t < 1 || t > s.steps()) throw InvalidInput("q_sample: timestep out of range");
    const double ab = s.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    WaveletCoeffs out(x0.band_dims, x0.source_spacing);
    for (int b = 0; b < 8; ++b)
        for (std::size_t i = 0; i < out.bands[b].size(); ++i)
            out.bands[b][i] =
                static_cast<float>(signal * x0.bands[b][i] + noise * eps.bands[b][i]);
    return out;
}

PosteriorParams posterior_params(const WaveletCoeffs& x_t, const WaveletCoeffs& x0_hat,
                                 int t, const NoiseSchedule& s) {
    if (!x_t.same_shape(x0_hat)) throw InvalidInput("posterior: x_t/x0_hat dims mismatch");
    if (t < 1) throw InvalidInput("posterior: t must be >= 1");

    const double ab_t = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double beta_t = s.beta(t);
    const double alpha_t = 1.0 - beta_t;
    const double denom = 1.0 - ab_t;

    const double coef_x0 = std::sqrt(ab_prev) * beta_t / denom;
    const double coef_xt = std::sqrt(alpha_t) * (1.0 - ab_prev) / denom;

    PosteriorParams p;
    p.beta_tilde = (1.0 - ab_prev) / denom * beta_t;
    p.mu = WaveletCoeffs(x_t.band_dims, x_t.source_spacing);
    for (int b = 0; b < 8; ++b)
        for (std::size_t i = 0; i < p.mu.bands[b].size(); ++i)
            p.mu.bands[b][i] = static_cast<float>(coef_x0 * x0_hat.bands[b][i] +
                                                  coef_xt * x_t.bands[b][i]);
    return p;
}

WaveletCoeffs p_sample_step(const WaveletCoeffs& x_t, const WaveletCoeffs& x0_hat, int t,
                            const NoiseSchedule& s, Rng& rng) {
    PosteriorParams p = posterior_params(x_t, x0_hat, t, s);
    if (t == 1) return std::move(p.mu); // beta_tilde_1 = 0: deterministic
    const double sigma = std::sqrt(p.beta_tilde);
    for (int b = 0; b < 8; ++b)
        for (auto& v : p.mu.bands[b])
            v = static_cast<float>(v + sigma * rng.gaussian());
    return std::move(p.mu);
}

WaveletCoeffs gaussian_coeffs(Dims band_dims, Spacing source_spacing, Rng& rng) {
    WaveletCoeffs c(band_dims, source_spacing);
    for (int b = 0; b < 8; ++b)
        for (auto& v : c.bands[b]) v = static_cast<float>(rng.gaussian());
    return c;
}

Volume inpaint(const Volume& pathological, const BinaryMask& mask, const Denoiser& denoiser,
               const NoiseSchedule& s, Rng& rng, const SamplerConfig& cfg) {
    validate_volume(pathological);
    validate_mask(mask);
    require_same_grid(pathological, mask);
    if (pathological.dims[0] % 2 || pathological.dims[1] % 2 || pathological.dims[2] % 2)
        throw InvalidInput("inpaint: dims must be even for the wavelet domain");

    const Volume m1 = apply_mask(pathological, mask);
    const WaveletCoeffs cond_m1 = dwt3(m1);
    const WaveletCoeffs cond_m2 = dwt3(mask_to_volume(mask));

    WaveletCoeffs x_t = gaussian_coeffs(cond_m1.band_dims, cond_m1.source_spacing, rng);
    WaveletCoeffs x0_hat;
    for (int t = s.steps(); t >= 1; --t) {
        ConditionedInput in{&x_t, &cond_m1, &cond_m2, t};
        x0_hat = denoiser.predict(in);
        if (!x0_hat.same_shape(x_t))
            throw InvalidInput("inpaint: denoiser output dims mismatch");
        if (cfg.clamp_x0) {
            for (int b = 0; b < 8; ++b)
                for (auto& v : x0_hat.bands[b])
                    v = std::clamp(v, static_cast<float>(cfg.clamp_lo),
                                   static_cast<float>(cfg.clamp_hi));
        }
        x_t = p_sample_step(x_t, x0_hat, t, s, rng);
        if (cfg.snapshot_every > 0 && cfg.snapshot_sink &&
            (t - 1) % cfg.snapshot_every == 0)
            cfg.snapshot_sink(t - 1, x_t);
    }

    const Volume generated = idwt3(x_t);

    // Composite: generated content inside the mask, untouched input outside.
    Volume out = pathological;
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i]) out.data[i] = generated.data[i];
    return out;
}

} // namespace troch
