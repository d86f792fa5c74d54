#pragma once

#include "troch/diffusion.hpp"
#include "troch/volume.hpp"
#include "troch/wavelet.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace troch {

enum class Activation { SiLU, Identity };

/// Small 3D conv U-Net over wavelet bands: a stem conv, one residual
/// block per scale with average-pool downsampling between scales, a
/// mirrored decoder with additive skips, and a head conv back to the
/// eight coefficient channels. Timesteps enter as a sinusoidal embedding
/// projected to a per-channel bias inside each residual block.
struct NetConfig {
    int in_channels = 24;  // (x_t, DWT(m1), DWT(m2))
    int out_channels = 8;
    int base_channels = 8;
    std::vector<int> channel_mult = {1, 2, 2}; // desk scale; paper preset is (1,2,2,4,4)
    int res_blocks = 1;                        // residual blocks per scale (paper preset: 2)
    int emb_dim = 16;
    Activation activation = Activation::SiLU;
    std::uint64_t init_seed = 0;
    double head_init_scale = 0.01; // near-zero head keeps early predictions tame

    void validate() const;
    int scales() const { return static_cast<int>(channel_mult.size()); }
};

struct ParamSegment {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
};

class DenoiserNet : public Denoiser {
public:
    explicit DenoiserNet(NetConfig cfg);
    DenoiserNet(const DenoiserNet&);
    DenoiserNet(DenoiserNet&&) noexcept;
    DenoiserNet& operator=(DenoiserNet);
    ~DenoiserNet() override;

    const NetConfig& config() const;
    std::size_t param_count() const;
    std::vector<double>& params();
    const std::vector<double>& params() const;
    const std::vector<double>& grads() const;
    const std::vector<ParamSegment>& layout() const;
    void zero_segment(const std::string& name_prefix);

    /// Predicted clean coefficients. Pure function of parameters and
    /// input; safe to call concurrently.
    WaveletCoeffs predict(const ConditionedInput& input) const override;

    /// Training loss for one conditioned sample (no gradient update).
    double loss_only(const ConditionedInput& input, const WaveletCoeffs& x0_target,
                     double lambda_reg) const;

    /// Loss plus exact analytic gradients accumulated into grads().
    double loss_and_grad(const ConditionedInput& input, const WaveletCoeffs& x0_target,
                         double lambda_reg, bool accumulate = false);

    void zero_grads();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Mean squared error over all coefficients plus lambda times the L1
/// norms of the predicted lhh, hlh, hhl and hhh bands.
double training_loss(const WaveletCoeffs& pred, const WaveletCoeffs& target,
                     double lambda_reg);

struct TrainSample {
    Volume y0;       // preprocessed healthy volume
    BinaryMask mask; // inpainting mask used to build the conditioning
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 1;
    int iterations = 2000;
    std::uint64_t seed = 0;
    double lambda_reg = 1.0;

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per iteration (batch mean)
};

/// Plain gradient descent (optional momentum) on the Eq.-style loss:
/// each iteration samples a volume and a timestep, noises the clean
/// coefficients and steps on the conditioned prediction error.
TrainResult train_denoiser(DenoiserNet& net, const std::vector<TrainSample>& data,
                           const NoiseSchedule& schedule, const TrainConfig& cfg);

/// Moving-average smoothing used for loss-trace convergence checks.
std::vector<double> smooth_trace(const std::vector<double>& trace, int window);

struct CheckpointMeta {
    NetConfig config;
    std::int64_t iterations = 0;
    std::uint64_t seed = 0;
};

// Checkpoint file: u32 little-endian header length, JSON header, then
// the parameter vector as little-endian f32.
void save_checkpoint(const DenoiserNet& net, const std::string& path,
                     std::int64_t iterations, std::uint64_t seed);
DenoiserNet load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

} // namespace troch
