// Acceptance suite: one pass/fail line per criterion, exit code equals
// the number of failures.

#include "troch/denoiser.hpp"
#include "troch/diffusion.hpp"
#include "troch/masking.hpp"
#include "troch/metrics.hpp"
#include "troch/phantom.hpp"
#include "troch/preprocess.hpp"
#include "troch/rng.hpp"
#include "troch/volume.hpp"
#include "troch/wavelet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace troch;

namespace {

struct Criterion {
    int number;
    std::string summary;
    std::function<bool(std::string&)> run;
};

Volume random_volume(Dims dims, Spacing sp, Rng& rng) {
    Volume v(dims, sp);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform());
    return v;
}

WaveletCoeffs random_coeffs(Dims bd, Rng& rng, double scale = 1.0) {
    WaveletCoeffs c(bd, {1, 1, 1});
    for (int b = 0; b < 8; ++b)
        for (auto& x : c.bands[b]) x = static_cast<float>(scale * rng.gaussian());
    return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Wavelet round-trip + Parseval on 100 random volumes, under 10 s.

bool criterion1(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst_recon = 0.0, worst_parseval = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Dims dims{2 * (1 + static_cast<int>(rng.uniform_index(32))),
                        2 * (1 + static_cast<int>(rng.uniform_index(32))),
                        2 * (1 + static_cast<int>(rng.uniform_index(8)))};
        const Volume v = random_volume(dims, {0.6, 0.6, 4.5}, rng);
        const WaveletCoeffs c = dwt3(v);
        const Volume back = idwt3(c);
        double max_err = 0.0, e_in = 0.0, e_out = 0.0;
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            max_err = std::max(
                max_err, std::abs(static_cast<double>(v.data[i]) - back.data[i]));
            e_in += static_cast<double>(v.data[i]) * v.data[i];
        }
        for (int b = 0; b < 8; ++b)
            for (float x : c.bands[b]) e_out += static_cast<double>(x) * x;
        worst_recon = std::max(worst_recon, max_err);
        if (e_in > 0.0)
            worst_parseval = std::max(worst_parseval, std::abs(e_out - e_in) / e_in);
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max |IDWT(DWT(v))-v| = %.2e, max Parseval rel err = %.2e, %.2f s",
                  worst_recon, worst_parseval, secs);
    detail = buf;
    return worst_recon < 1e-5 && worst_parseval < 1e-5 && secs < 10.0;
}

// ---------------------------------------------------------------------------
// 2. Schedule and posterior algebra.

bool criterion2(std::string& detail) {
    bool ok = true;

    // beta_t = 0 keeps x_t fixed with zero posterior variance.
    {
        const auto s = NoiseSchedule::from_betas({0.1, 0.0, 0.2});
        Rng rng(202);
        const auto x_t = random_coeffs({2, 2, 2}, rng);
        const auto x0 = random_coeffs({2, 2, 2}, rng);
        const auto p = posterior_params(x_t, x0, 2, s);
        ok &= p.beta_tilde == 0.0;
        for (int b = 0; b < 8; ++b)
            for (std::size_t i = 0; i < x_t.bands[b].size(); ++i)
                ok &= p.mu.bands[b][i] == x_t.bands[b][i];
    }

    // Final step: mu = x0_hat exactly (to round-off), beta_tilde = 0.
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    {
        Rng rng(203);
        const auto x_t = random_coeffs({2, 2, 2}, rng);
        const auto x0 = random_coeffs({2, 2, 2}, rng);
        const auto p = posterior_params(x_t, x0, 1, s);
        ok &= p.beta_tilde == 0.0;
        for (int b = 0; b < 8; ++b)
            for (std::size_t i = 0; i < x0.bands[b].size(); ++i)
                ok &= std::abs(p.mu.bands[b][i] - x0.bands[b][i]) <=
                      1e-6 * std::abs(x0.bands[b][i]) + 1e-9;
    }

    // alpha_bar(1000) against an independent extended-precision product.
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t)
        prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L);
    const double independent = static_cast<double>(prod);
    const double got = s.alpha_bar(1000);
    ok &= std::abs(got - independent) / independent < 1e-3;
    ok &= std::abs(got - 4.04e-5) / 4.04e-5 < 5e-3; // matches the rounded value

    char buf[160];
    std::snprintf(buf, sizeof buf, "alpha_bar(1000) = %.5e (independent %.5e)", got,
                  independent);
    detail = buf;
    return ok;
}

// ---------------------------------------------------------------------------
// 3. Forward-process statistics at t in {1, 250, 500, 1000}.

bool criterion3(std::string& detail) {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    const double x0_val = 0.8;
    WaveletCoeffs x0({2, 2, 2}, {1, 1, 1});
    x0.bands[0][0] = static_cast<float>(x0_val);
    Rng rng(303);
    const int n = 10000;
    bool ok = true;
    std::string lines;
    for (int t : {1, 250, 500, 1000}) {
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto eps = random_coeffs({2, 2, 2}, rng);
            const auto xt = q_sample(x0, t, eps, s);
            const double v = xt.bands[0][0];
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        const double want_mean = std::sqrt(s.alpha_bar(t)) * x0_val;
        const double want_var = 1.0 - s.alpha_bar(t);
        const double se_mean = std::sqrt(want_var / n);
        const double se_var = want_var * std::sqrt(2.0 / n);
        const bool mean_ok = std::abs(mean - want_mean) < 3.0 * se_mean;
        const bool var_ok = std::abs(var - want_var) < 3.0 * se_var;
        ok &= mean_ok && var_ok;
        char buf[120];
        std::snprintf(buf, sizeof buf, " t=%d |dmean|=%.2fse |dvar|=%.2fse", t,
                      std::abs(mean - want_mean) / se_mean,
                      std::abs(var - want_var) / se_var);
        lines += buf;
    }
    detail = "10^4 draws;" + lines;
    return ok;
}

// ---------------------------------------------------------------------------
// 4. Analytic gradients vs central finite differences (per-coefficient
// MSE plus HF L1, the training loss).

bool criterion4(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    NetConfig cfg;
    cfg.base_channels = 4;
    cfg.channel_mult = {1};
    cfg.emb_dim = 8;
    cfg.init_seed = 3;
    cfg.head_init_scale = 1.0; // keeps penalized outputs away from zero
    DenoiserNet net(cfg);
    if (net.param_count() > 5000) {
        detail = "net too large";
        return false;
    }

    Rng rng(3055);
    const Dims bd{8, 8, 4};
    const auto x_t = random_coeffs(bd, rng);
    const auto m1 = random_coeffs(bd, rng, 0.5);
    const auto m2 = random_coeffs(bd, rng, 0.5);
    const auto x0 = random_coeffs(bd, rng);
    const ConditionedInput ci{&x_t, &m1, &m2, 37};

    net.loss_and_grad(ci, x0, 1.0);
    const std::vector<double> analytic = net.grads();

    const double h = 1e-4;
    auto& params = net.params();
    double worst = 0.0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double lp = net.loss_only(ci, x0, 1.0);
        params[i] = saved - h;
        const double lm = net.loss_only(ci, x0, 1.0);
        params[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        const double rel = std::abs(fd - analytic[i]) / denom;
        worst = std::max(worst, rel);
        if (rel >= 1e-3) ++bad;
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%zu params, worst rel err %.2e, %zu over 1e-3, %.1f s",
                  params.size(), worst, bad, secs);
    detail = buf;
    return bad == 0 && secs < 120.0;
}

// ---------------------------------------------------------------------------
// 5. Oracle-denoiser end-to-end inpainting.

struct OracleDenoiser final : Denoiser {
    WaveletCoeffs target;
    explicit OracleDenoiser(WaveletCoeffs t) : target(std::move(t)) {}
    WaveletCoeffs predict(const ConditionedInput&) const override { return target; }
};

bool criterion5(std::string& detail) {
    Rng rng(505);
    const Volume truth = random_volume({16, 16, 8}, {1.0, 1.0, 2.0}, rng);
    Volume pathological = truth;
    BinaryMask mask(truth.dims, truth.spacing);
    for (int z = 2; z < 6; ++z)
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) {
                mask.at(x, y, z) = 1;
                pathological.at(x, y, z) = 0.2f;
            }

    const OracleDenoiser oracle(dwt3(truth));
    const auto s = make_linear_schedule(100, 1e-3, 0.2);
    Rng sampler_rng(42);
    const Volume out = inpaint(pathological, mask, oracle, s, sampler_rng);

    double max_in = 0.0;
    bool outside_ok = true;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        if (mask.data[i])
            max_in = std::max(max_in,
                              std::abs(static_cast<double>(out.data[i]) - truth.data[i]));
        else
            outside_ok &= out.data[i] == pathological.data[i];
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "max in-mask err %.2e, outside bit-identical: %s",
                  max_in, outside_ok ? "yes" : "no");
    detail = buf;
    return max_in < 1e-4 && outside_ok;
}

// ---------------------------------------------------------------------------
// 6. Brute-force oracle agreement (>= 100 instances each, zero mismatches).

BinaryMask brute_morph(const BinaryMask& m, const StructuringElement& se, bool erode) {
    BinaryMask out(m.dims, m.spacing);
    for (int z = 0; z < m.dims[2]; ++z)
        for (int y = 0; y < m.dims[1]; ++y)
            for (int x = 0; x < m.dims[0]; ++x) {
                int acc = erode ? 1 : 0;
                for (const auto& o : se.offsets) {
                    const int px = x + o[0], py = y + o[1], pz = z + o[2];
                    int val = 0;
                    if (px >= 0 && px < m.dims[0] && py >= 0 && py < m.dims[1] &&
                        pz >= 0 && pz < m.dims[2])
                        val = m.at(px, py, pz);
                    acc = erode ? std::min(acc, val) : std::max(acc, val);
                }
                out.at(x, y, z) = static_cast<std::uint8_t>(acc);
            }
    return out;
}

std::vector<int> flood_labels(const BinaryMask& m, int connectivity) {
    const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
    std::vector<int> label(m.data.size(), -1);
    int next = 0;
    for (std::size_t seed = 0; seed < m.data.size(); ++seed) {
        if (!m.data[seed] || label[seed] >= 0) continue;
        std::vector<std::size_t> stack{seed};
        label[seed] = next;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(cur % nx);
            const int y = static_cast<int>((cur / nx) % ny);
            const int z = static_cast<int>(cur / (static_cast<std::size_t>(nx) * ny));
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dx && !dy && !dz) continue;
                        if (connectivity == 6 &&
                            std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
                            continue;
                        const int px = x + dx, py = y + dy, pz = z + dz;
                        if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 ||
                            pz >= nz)
                            continue;
                        const std::size_t pi =
                            static_cast<std::size_t>(px) +
                            static_cast<std::size_t>(nx) *
                                (static_cast<std::size_t>(py) +
                                 static_cast<std::size_t>(ny) *
                                     static_cast<std::size_t>(pz));
                        if (!m.data[pi] || label[pi] >= 0) continue;
                        label[pi] = label[cur];
                        stack.push_back(pi);
                    }
        }
        ++next;
    }
    return label;
}

bool criterion6(std::string& detail) {
    int mismatches = 0;
    Rng rng(606);

    // Morphology.
    for (int trial = 0; trial < 100; ++trial) {
        BinaryMask m({8, 8, 8}, {1, 1, 1});
        for (auto& x : m.data) x = rng.uniform() < 0.5 ? 1 : 0;
        const double r = 0.5 + 2.0 * rng.uniform();
        const auto se = StructuringElement::ellipsoid({r, r, r}, {1, 1, 1});
        if (morph_erode(m, se).data != brute_morph(m, se, true).data) ++mismatches;
        if (morph_dilate(m, se).data != brute_morph(m, se, false).data) ++mismatches;
    }

    // Otsu over random histograms.
    for (int trial = 0; trial < 100; ++trial) {
        const int bins = 2 + static_cast<int>(rng.uniform_index(255));
        std::vector<double> counts(bins);
        for (auto& c : counts) c = std::floor(100.0 * rng.uniform());
        double total = 0.0;
        for (double c : counts) total += c;
        if (total == 0.0) counts[bins / 2] = 1.0;
        double total_m = 0.0;
        for (int i = 0; i < bins; ++i) total_m += counts[i] * (i + 0.5);
        int expected = -1;
        double best = -1.0;
        for (int k = 1; k < bins; ++k) {
            double w0 = 0.0, m0 = 0.0;
            for (int i = 0; i < k; ++i) {
                w0 += counts[i];
                m0 += counts[i] * (i + 0.5);
            }
            const double w1 = total - w0;
            if (w0 <= 0.0 || w1 <= 0.0) continue;
            const double d = m0 / w0 - (total_m - m0) / w1;
            if (w0 * w1 * d * d > best) {
                best = w0 * w1 * d * d;
                expected = k;
            }
        }
        if (expected < 0) continue;
        if (otsu_cut_from_histogram(counts) != expected) ++mismatches;
    }

    // Connected components.
    for (int trial = 0; trial < 100; ++trial) {
        BinaryMask m({8, 8, 8}, {1, 1, 1});
        for (auto& x : m.data) x = rng.uniform() < 0.3 ? 1 : 0;
        if (m.count() == 0) m.data[0] = 1;
        const int conn = (trial % 2 == 0) ? 6 : 26;
        const auto label = flood_labels(m, conn);
        int n = 0;
        for (int l : label) n = std::max(n, l + 1);
        std::vector<std::size_t> counts(n, 0);
        for (int l : label)
            if (l >= 0) ++counts[l];
        int best = 0;
        for (int i = 1; i < n; ++i)
            if (counts[i] > counts[best]) best = i;
        BinaryMask expect(m.dims, m.spacing);
        for (std::size_t i = 0; i < label.size(); ++i)
            expect.data[i] = (label[i] == best) ? 1 : 0;
        if (largest_component(m, conn).data != expect.data) ++mismatches;
    }

    // SSIM maps against the direct windowed formula.
    std::vector<double> kernel(11);
    {
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double x = i - 5;
            kernel[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += kernel[i];
        }
        for (auto& k : kernel) k /= sum;
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 11 + static_cast<int>(rng.uniform_index(6)); // 11..16
        const Dims dims{n, n, n};
        const Volume a = random_volume(dims, {1, 1, 1}, rng);
        const Volume b = random_volume(dims, {1, 1, 1}, rng);
        const Volume map = ssim_map(a, b);
        for (int probe = 0; probe < 8; ++probe) {
            const int x = static_cast<int>(rng.uniform_index(n));
            const int y = static_cast<int>(rng.uniform_index(n));
            const int z = static_cast<int>(rng.uniform_index(n));
            double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
            for (int dz = -5; dz <= 5; ++dz)
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const double w = kernel[dx + 5] * kernel[dy + 5] * kernel[dz + 5];
                        const int px = x + dx, py = y + dy, pz = z + dz;
                        double va = 0.0, vb = 0.0;
                        if (px >= 0 && px < n && py >= 0 && py < n && pz >= 0 && pz < n) {
                            va = a.at(px, py, pz);
                            vb = b.at(px, py, pz);
                        }
                        ma += w * va;
                        mb += w * vb;
                        maa += w * va * va;
                        mbb += w * vb * vb;
                        mab += w * va * vb;
                    }
            const double C1 = 1e-4, C2 = 9e-4;
            const double expect = ((2 * ma * mb + C1) * (2 * (mab - ma * mb) + C2)) /
                                  ((ma * ma + mb * mb + C1) *
                                   ((maa - ma * ma) + (mbb - mb * mb) + C2));
            if (std::abs(map.at(x, y, z) - expect) >= 1e-5) ++mismatches;
        }
    }

    // Wilcoxon exact p against full enumeration.
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(10));
        std::vector<double> before(n, 0.0), after(n);
        bool any = false;
        for (int i = 0; i < n; ++i) {
            after[i] = static_cast<double>(static_cast<int>(rng.uniform_index(9)) - 4);
            any |= after[i] != 0.0;
        }
        if (!any) continue;
        const auto r = wilcoxon_signed_rank(before, after);
        std::vector<double> d;
        for (double v : after)
            if (v != 0.0) d.push_back(v);
        const int nn = static_cast<int>(d.size());
        std::vector<double> ranks(nn);
        for (int i = 0; i < nn; ++i) {
            double lo = 0, hi = 0;
            for (int j = 0; j < nn; ++j) {
                if (std::abs(d[j]) < std::abs(d[i])) ++lo;
                if (std::abs(d[j]) <= std::abs(d[i])) ++hi;
            }
            ranks[i] = (lo + 1 + hi) / 2.0;
        }
        double w_plus = 0.0;
        for (int i = 0; i < nn; ++i)
            if (d[i] > 0) w_plus += ranks[i];
        const double w_minus = nn * (nn + 1) / 2.0 - w_plus;
        int ge_max = 0, le_min = 0, ge = 0;
        const double w_max = std::max(w_plus, w_minus), w_min = std::min(w_plus, w_minus);
        for (int sbits = 0; sbits < (1 << nn); ++sbits) {
            double w = 0.0;
            for (int i = 0; i < nn; ++i)
                if (sbits & (1 << i)) w += ranks[i];
            if (w >= w_plus - 1e-9) ++ge;
            if (w >= w_max - 1e-9) ++ge_max;
            if (w <= w_min + 1e-9) ++le_min;
        }
        const double total = static_cast<double>(1 << nn);
        if (std::abs(r.p_greater - ge / total) > 1e-12) ++mismatches;
        if (std::abs(r.p_two_sided - std::min(1.0, (ge_max + le_min) / total)) > 1e-12)
            ++mismatches;
    }

    detail = "morphology/otsu/components/ssim/wilcoxon vs oracles, mismatches = " +
             std::to_string(mismatches);
    return mismatches == 0;
}

// ---------------------------------------------------------------------------
// 7 + 8. Desk-scale learning and the directional diagnostic check.

PhantomSpec desk_spec(double sa, double tgd, std::uint64_t seed) {
    PhantomSpec s;
    s.dims = {32, 32, 8};
    s.spacing = {1.2, 1.2, 4.0};
    s.sulcus_angle_deg = sa;
    s.groove_depth_mm = tgd;
    s.condyle_width_mm = 30.0;
    s.body_depth_mm = 10.0;
    s.patella_semi_axes_mm = {5.0, 3.0, 6.0};
    s.patella_gap_mm = 2.5;
    s.noise_level = 0.01;
    s.seed = seed;
    return s;
}

constexpr double kPeakHalfWidthMm = 12.0; // shared by both phantom families

double tgd_for(double sa_deg) {
    return kPeakHalfWidthMm / std::tan(sa_deg / 2.0 * M_PI / 180.0);
}

struct TrainedModel {
    DenoiserNet net;
    NoiseSchedule schedule;
    MaskSpec bowl_spec;
    PatellaParams patella;
};

TrainedModel* g_model = nullptr; // built by criterion 7, reused by 8

bool criterion7(std::string& detail) {
    static TrainedModel model{DenoiserNet(NetConfig{}),
                              make_linear_schedule(100, 1e-3, 0.2), MaskSpec{},
                              PatellaParams{}};
    model.bowl_spec.offset_mm = 9.0; // desk-scaled peri-patellar offset
    model.patella.min_volume_cm3 = 0.05;
    model.patella.max_volume_cm3 = 10.0;

    // 50 healthy phantoms, SA in [140, 148].
    Rng meta(2025);
    std::vector<TrainSample> data;
    for (int i = 0; i < 50; ++i) {
        const double sa = 140.0 + 8.0 * meta.uniform();
        const auto ph = generate_phantom(desk_spec(sa, tgd_for(sa), 1000 + i));
        const auto pr = localize_patella(ph.bone_labels, model.patella);
        if (!pr.found) {
            detail = "healthy phantom without a localizable patella";
            return false;
        }
        TrainSample s;
        s.y0 = ph.volume;
        s.mask = bowl_mask(pr.patella, model.bowl_spec);
        data.push_back(std::move(s));
    }

    NetConfig ncfg;
    ncfg.base_channels = 8;
    ncfg.channel_mult = {1, 2, 2};
    ncfg.emb_dim = 16;
    ncfg.init_seed = 1;

    TrainConfig tcfg;
    tcfg.learning_rate = 1e-3;
    tcfg.momentum = 0.9;
    tcfg.batch_size = 1;
    tcfg.iterations = 4000;
    tcfg.lambda_reg = 1e-3;
    tcfg.seed = 7;

    model.net = DenoiserNet(ncfg);
    const auto result = train_denoiser(model.net, data, model.schedule, tcfg);

    const auto smoothed = smooth_trace(result.loss_trace, 100);
    const double ratio = smoothed.back() / smoothed.front();

    // Seed determinism: a fresh net retrained for a prefix reproduces the
    // trace iteration for iteration.
    DenoiserNet net2(ncfg);
    TrainConfig prefix_cfg = tcfg;
    prefix_cfg.iterations = 60;
    const auto prefix = train_denoiser(net2, data, model.schedule, prefix_cfg);
    bool deterministic = true;
    for (int i = 0; i < 60; ++i)
        deterministic &= prefix.loss_trace[i] == result.loss_trace[i];

    g_model = &model;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "50 phantoms, %d iterations: smoothed loss %.4f -> %.4f (ratio %.3f), "
                  "seed-deterministic: %s",
                  tcfg.iterations, smoothed.front(), smoothed.back(), ratio,
                  deterministic ? "yes" : "no");
    detail = buf;
    return ratio < 0.20 && deterministic;
}

bool criterion8(std::string& detail) {
    if (!g_model) {
        detail = "no trained model (criterion 7 did not run)";
        return false;
    }
    std::vector<double> sa_before, sa_after, tgd_before, tgd_after;
    for (int i = 0; i < 20; ++i) {
        Rng pick(5000 + i);
        const double sa = 154.0 + 16.0 * pick.uniform();
        const auto ph = generate_phantom(desk_spec(sa, tgd_for(sa), 7000 + i));
        const auto pr = localize_patella(ph.bone_labels, g_model->patella);
        if (!pr.found) continue;
        const auto mask = bowl_mask(pr.patella, g_model->bowl_spec);
        const int slice = choose_measurement_slice(ph.bone_labels);
        const auto before = measure_sulcus_angle(ph.volume, slice);
        Rng srng(9000 + i);
        const Volume out =
            inpaint(ph.volume, mask, g_model->net, g_model->schedule, srng);
        const auto after = measure_sulcus_angle(out, slice);
        if (!before.measurable || !after.measurable) continue;
        sa_before.push_back(before.sulcus_angle_deg);
        sa_after.push_back(after.sulcus_angle_deg);
        tgd_before.push_back(before.groove_depth_mm);
        tgd_after.push_back(after.groove_depth_mm);
    }
    if (sa_before.size() < 10) {
        detail = "too few measurable pairs";
        return false;
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double sa_drop = median(sa_before) - median(sa_after);
    const double tgd_gain = median(tgd_after) - median(tgd_before);
    const auto w_sa = wilcoxon_signed_rank(sa_before, sa_after);    // p_less: after < before
    const auto w_tgd = wilcoxon_signed_rank(tgd_before, tgd_after); // p_greater: after > before

    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "n=%zu pairs: median SA %.1f -> %.1f deg (drop %.1f), median TGD "
                  "%.2f -> %.2f mm, one-sided p(SA) %.2e, p(TGD) %.2e",
                  sa_before.size(), median(sa_before), median(sa_after), sa_drop,
                  median(tgd_before), median(tgd_after), w_sa.p_less, w_tgd.p_greater);
    detail = buf;
    return sa_drop >= 5.0 && tgd_gain > 0.0 && w_sa.p_less < 0.05 &&
           w_tgd.p_greater < 0.05;
}

// ---------------------------------------------------------------------------
// 9. Metric self-consistency.

bool criterion9(std::string& detail) {
    Rng rng(909);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        const Dims dims{14, 14, 14};
        const Volume a = random_volume(dims, {1, 1, 1}, rng);
        Volume b = random_volume(dims, {1, 1, 1}, rng);
        BinaryMask m(dims, {1, 1, 1});
        for (int z = 5; z < 9; ++z)
            for (int y = 5; y < 9; ++y)
                for (int x = 5; x < 9; ++x) m.at(x, y, z) = 1;
        if (trial == 0) b = a; // the mse = 0 / psnr = +inf case

        const MetricReport r = evaluate_masked(a, b, m);
        if (r.mse == 0.0)
            ok &= std::isinf(r.psnr_db);
        else
            ok &= r.psnr_db == -10.0 * std::log10(r.mse); // exact, same double path

        // Arbitrary out-of-mask perturbation: metrics stay put (SSIM
        // pre-zeroes every non-mask voxel, which covers the halo rule).
        Volume a2 = a, b2 = b;
        for (int k = 0; k < 40; ++k) {
            const int x = static_cast<int>(rng.uniform_index(14));
            const int y = static_cast<int>(rng.uniform_index(14));
            const int z = static_cast<int>(rng.uniform_index(14));
            if (m.at(x, y, z)) continue;
            a2.at(x, y, z) = static_cast<float>(rng.uniform() * 50.0 - 25.0);
            b2.at(x, y, z) = static_cast<float>(rng.uniform() * 50.0 - 25.0);
        }
        ok &= masked_mse(a2, b2, m) == r.mse;
        ok &= masked_ssim(a2, b2, m) == r.ssim;
    }
    detail = "psnr identity exact, out-of-mask perturbations invisible";
    return ok;
}

// ---------------------------------------------------------------------------
// 10. Preprocessing contract at paper scale.

bool criterion10(std::string& detail) {
    const PreprocessConfig cfg; // paper defaults
    Rng rng(1010);
    bool ok = true;
    const std::array<std::pair<Dims, Spacing>, 3> inputs = {{
        {{64, 80, 32}, {2.0, 1.5, 5.0}},
        {{300, 300, 40}, {0.6, 0.6, 4.5}},
        {{50, 20, 10}, {1.1, 3.3, 9.9}},
    }};
    for (const auto& [dims, sp] : inputs) {
        const Volume v = random_volume(dims, sp, rng);
        const NormalizeResult res = preprocess(v, cfg);
        ok &= res.volume.dims == Dims{256, 256, 32};
        ok &= res.volume.spacing == Spacing{0.6, 0.6, 4.5};
        for (float x : res.volume.data) ok &= x >= 0.0f && x <= 1.0f;
        ok &= !res.degenerate;
    }
    // A phantom goes through the same contract.
    const auto ph = generate_phantom(desk_spec(150.0, tgd_for(150.0), 3));
    const NormalizeResult res = preprocess(ph.volume, cfg);
    ok &= res.volume.dims == Dims{256, 256, 32};
    ok &= res.volume.spacing == Spacing{0.6, 0.6, 4.5};
    detail = "all inputs -> (256,256,32) at (0.6,0.6,4.5) mm in [0,1]";
    return ok;
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "wavelet round-trip and Parseval on 100 random volumes", criterion1},
        {2, "schedule/posterior algebra and alpha_bar(1000)", criterion2},
        {3, "forward-process statistics within 3 standard errors", criterion3},
        {4, "analytic gradients vs central finite differences", criterion4},
        {5, "oracle-denoiser end-to-end inpainting", criterion5},
        {6, "brute-force oracle agreement (zero mismatches)", criterion6},
        {7, "desk-scale training convergence and determinism", criterion7},
        {8, "directional diagnostic improvement on dysplastic phantoms", criterion8},
        {9, "metric self-consistency", criterion9},
        {10, "preprocessing contract (256,256,32)@(0.6,0.6,4.5)", criterion10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", c.number,
                    c.summary.c_str());
        if (!detail.empty()) std::printf("         %s\n", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0)
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    else
        std::printf("%d acceptance criteria FAILED\n", failures);
    return failures;
}
