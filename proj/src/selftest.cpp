#include "troch/selftest.hpp"

#include "troch/diffusion.hpp"
#include "troch/masking.hpp"
#include "troch/metrics.hpp"
#include "troch/phantom.hpp"
#include "troch/preprocess.hpp"
#include "troch/rng.hpp"
#include "troch/volume.hpp"
#include "troch/volume_io.hpp"
#include "troch/wavelet.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace troch {

namespace {

Volume random_volume(Dims dims, Spacing sp, Rng& rng) {
    Volume v(dims, sp);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform());
    return v;
}

bool check_wavelet_roundtrip() {
    Rng rng(11);
    const Volume v = random_volume({16, 16, 16}, {1, 1, 1}, rng);
    const Volume back = idwt3(dwt3(v));
    double max_err = 0.0, in_energy = 0.0, out_energy = 0.0;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        max_err = std::max(max_err, std::abs(static_cast<double>(v.data[i]) - back.data[i]));
        in_energy += static_cast<double>(v.data[i]) * v.data[i];
    }
    const WaveletCoeffs c = dwt3(v);
    for (int b = 0; b < 8; ++b)
        for (float x : c.bands[b]) out_energy += static_cast<double>(x) * x;
    return max_err < 1e-5 && std::abs(in_energy - out_energy) / in_energy < 1e-5;
}

bool check_schedule_algebra() {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    for (int t : {1, 2, 500, 1000}) {
        const double ratio = s.alpha_bar(t) / s.alpha_bar(t - 1);
        if (std::abs(ratio - s.alpha(t)) > 1e-12) return false;
    }
    // t = 1 posterior: mu == x0_hat and beta_tilde == 0.
    WaveletCoeffs x_t({2, 2, 2}, {1, 1, 1}), x0({2, 2, 2}, {1, 1, 1});
    Rng rng(3);
    for (int b = 0; b < 8; ++b)
        for (std::size_t i = 0; i < x_t.bands[b].size(); ++i) {
            x_t.bands[b][i] = static_cast<float>(rng.gaussian());
            x0.bands[b][i] = static_cast<float>(rng.gaussian());
        }
    const auto post = posterior_params(x_t, x0, 1, s);
    if (post.beta_tilde != 0.0) return false;
    for (int b = 0; b < 8; ++b)
        for (std::size_t i = 0; i < x0.bands[b].size(); ++i)
            if (std::abs(post.mu.bands[b][i] - x0.bands[b][i]) > 1e-6f) return false;
    return true;
}

bool check_raw_roundtrip() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "troch_selftest";
    fs::create_directories(dir);
    const std::string path = (dir / "rt.vol").string();
    Rng rng(5);
    const Volume v = random_volume({7, 5, 3}, {0.6, 0.6, 4.5}, rng);
    save_raw(v, path);
    const Volume r = load_raw(path);
    return r.dims == v.dims && r.spacing == v.spacing && r.data == v.data;
}

bool check_morphology() {
    Rng rng(7);
    BinaryMask m({8, 8, 8}, {1, 1, 1});
    for (auto& x : m.data) x = rng.uniform() < 0.4 ? 1 : 0;
    const auto se = StructuringElement::ellipsoid({1.0, 1.0, 1.0}, {1, 1, 1});
    const auto opened = morph_open(m, se);
    const auto closed = morph_close(m, se);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        if (opened.data[i] && !m.data[i]) return false; // opening anti-extensive
    const auto reopened = morph_open(opened, se);
    return reopened.data == opened.data && closed.data == morph_close(m, se).data;
}

bool check_otsu_oracle() {
    Rng rng(13);
    std::vector<double> counts(64);
    for (auto& c : counts) c = std::floor(rng.uniform() * 50.0);
    counts[8] += 500;  // force a bimodal shape
    counts[48] += 500;
    const int cut = otsu_cut_from_histogram(counts);

    double total = 0.0, total_m = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        total += counts[i];
        total_m += counts[i] * (i + 0.5);
    }
    int best = -1;
    double best_var = -1.0;
    for (std::size_t k = 1; k < counts.size(); ++k) {
        double w0 = 0.0, m0 = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            w0 += counts[i];
            m0 += counts[i] * (i + 0.5);
        }
        const double w1 = total - w0;
        if (w0 <= 0.0 || w1 <= 0.0) continue;
        const double d = m0 / w0 - (total_m - m0) / w1;
        const double var = w0 * w1 * d * d;
        if (var > best_var) {
            best_var = var;
            best = static_cast<int>(k);
        }
    }
    return cut == best;
}

bool check_components() {
    BinaryMask m({8, 8, 1}, {1, 1, 1});
    for (int x = 0; x < 4; ++x) m.at(x, 0, 0) = 1;     // 4-voxel blob
    for (int x = 6; x < 8; ++x) m.at(x, 7, 0) = 1;     // 2-voxel blob
    const auto big = largest_component(m, 6);
    return big.count() == 4 && big.at(0, 0, 0) == 1 && big.at(6, 7, 0) == 0;
}

bool check_ssim_identity() {
    Rng rng(17);
    const Volume v = random_volume({12, 12, 12}, {1, 1, 1}, rng);
    BinaryMask m(v.dims, v.spacing);
    for (auto& x : m.data) x = 1;
    return std::abs(masked_ssim(v, v, m) - 1.0) < 1e-9;
}

bool check_wilcoxon_exact() {
    const std::vector<double> before{0, 0, 0, 0, 0};
    const std::vector<double> after{1, 2, 3, 4, 5};
    const auto r = wilcoxon_signed_rank(before, after);
    return r.exact && std::abs(r.p_greater - 1.0 / 32.0) < 1e-12 &&
           std::abs(r.p_two_sided - 1.0 / 16.0) < 1e-12;
}

bool check_measure_roundtrip() {
    PhantomSpec spec;
    spec.dims = {48, 40, 8};
    spec.spacing = {0.8, 0.8, 3.0};
    spec.sulcus_angle_deg = 150.0;
    spec.groove_depth_mm = 2.4;
    spec.condyle_width_mm = 24.0;
    const auto ph = generate_phantom(spec);
    const int slice = choose_measurement_slice(ph.bone_labels);
    const auto m = measure_sulcus_angle(ph.volume, slice);
    return m.measurable && std::abs(m.sulcus_angle_deg - 150.0) < 3.0 &&
           std::abs(m.groove_depth_mm - 2.4) < 0.4;
}

} // namespace

int run_selftest(std::ostream& out) {
    const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
        {"wavelet round-trip + Parseval", check_wavelet_roundtrip},
        {"schedule algebra", check_schedule_algebra},
        {"raw volume round-trip", check_raw_roundtrip},
        {"morphology invariants", check_morphology},
        {"otsu vs exhaustive cut", check_otsu_oracle},
        {"largest connected component", check_components},
        {"ssim self-identity", check_ssim_identity},
        {"wilcoxon exact case", check_wilcoxon_exact},
        {"phantom measure round-trip", check_measure_roundtrip},
    };
    int failures = 0;
    for (const auto& [name, fn] : checks) {
        bool ok = false;
        std::string err;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            err = e.what();
        }
        out << (ok ? "[ ok ] " : "[fail] ") << name;
        if (!ok && !err.empty()) out << " (" << err << ")";
        out << "\n";
        if (!ok) ++failures;
    }
    return failures;
}

} // namespace troch
