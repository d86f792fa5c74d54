#include "troch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace troch {

namespace {

void check_metric_inputs(const Volume& a, const Volume& b, const BinaryMask& m) {
    validate_volume(a, "pred");
    validate_volume(b, "ref");
    validate_mask(m);
    if (a.dims != b.dims || a.dims != m.dims)
        throw InvalidInput("metrics: volume/mask dims mismatch");
    if (m.count() == 0) throw InvalidInput("metrics: empty mask");
}

} // namespace

double masked_mse(const Volume& a, const Volume& b, const BinaryMask& m) {
    check_metric_inputs(a, b, m);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!m.data[i]) continue;
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
        ++n;
    }
    return acc / static_cast<double>(n);
}

double masked_psnr(const Volume& a, const Volume& b, const BinaryMask& m) {
    const double mse = masked_mse(a, b, m);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    const int radius = window / 2;
    std::vector<double> k(window);
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double x = i - radius;
        k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian filtering with zero extension, one axis at a time.
void blur_axis(std::vector<double>& field, Dims dims, int axis,
               const std::vector<double>& kernel) {
    const int radius = static_cast<int>(kernel.size()) / 2;
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    std::vector<double> out(field.size(), 0.0);
    const int n_axis = dims[axis];
    const std::size_t stride = (axis == 0)   ? 1
                               : (axis == 1) ? static_cast<std::size_t>(nx)
                                             : static_cast<std::size_t>(nx) * ny;

    auto line_starts = [&](auto&& fn) {
        if (axis == 0) {
            for (int z = 0; z < nz; ++z)
                for (int y = 0; y < ny; ++y)
                    fn((static_cast<std::size_t>(z) * ny + y) * nx);
        } else if (axis == 1) {
            for (int z = 0; z < nz; ++z)
                for (int x = 0; x < nx; ++x)
                    fn(static_cast<std::size_t>(z) * ny * nx + x);
        } else {
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x)
                    fn(static_cast<std::size_t>(y) * nx + x);
        }
    };

    line_starts([&](std::size_t base) {
        for (int i = 0; i < n_axis; ++i) {
            double acc = 0.0;
            const int j0 = std::max(0, i - radius);
            const int j1 = std::min(n_axis - 1, i + radius);
            for (int j = j0; j <= j1; ++j)
                acc += kernel[j - i + radius] * field[base + j * stride];
            out[base + i * stride] = acc;
        }
    });
    field = std::move(out);
}

std::vector<double> blur3(const std::vector<double>& in, Dims dims,
                          const std::vector<double>& kernel) {
    std::vector<double> f = in;
    for (int a = 0; a < 3; ++a) blur_axis(f, dims, a, kernel);
    return f;
}

} // namespace

Volume ssim_map(const Volume& a, const Volume& b, const SsimParams& params) {
    validate_volume(a, "ssim a");
    validate_volume(b, "ssim b");
    if (a.dims != b.dims) throw InvalidInput("ssim: dims mismatch");
    for (int ax = 0; ax < 3; ++ax)
        if (a.dims[ax] < params.window)
            throw InvalidInput("ssim: volume smaller than the window");

    const std::size_t n = a.data.size();
    std::vector<double> fa(n), fb(n), faa(n), fbb(n), fab(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double va = a.data[i], vb = b.data[i];
        fa[i] = va;
        fb[i] = vb;
        faa[i] = va * va;
        fbb[i] = vb * vb;
        fab[i] = va * vb;
    }

    const auto kernel = gaussian_kernel(params.window, params.sigma);
    const auto mu_a = blur3(fa, a.dims, kernel);
    const auto mu_b = blur3(fb, a.dims, kernel);
    const auto e_aa = blur3(faa, a.dims, kernel);
    const auto e_bb = blur3(fbb, a.dims, kernel);
    const auto e_ab = blur3(fab, a.dims, kernel);

    const double c1 = params.k1 * params.data_range * params.k1 * params.data_range;
    const double c2 = params.k2 * params.data_range * params.k2 * params.data_range;

    Volume map(a.dims, a.spacing);
    for (std::size_t i = 0; i < n; ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        map.data[i] = static_cast<float>(num / den);
    }
    return map;
}

double masked_ssim(const Volume& a, const Volume& b, const BinaryMask& m,
                   const SsimParams& params) {
    check_metric_inputs(a, b, m);
    Volume za = a, zb = b;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!m.data[i]) {
            za.data[i] = 0.0f;
            zb.data[i] = 0.0f;
        }
    }
    const Volume map = ssim_map(za, zb, params);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!m.data[i]) continue;
        acc += map.data[i];
        ++n;
    }
    return acc / static_cast<double>(n);
}

MetricReport evaluate_masked(const Volume& pred, const Volume& ref, const BinaryMask& m) {
    MetricReport r;
    r.mse = masked_mse(pred, ref, m);
    r.psnr_db = (r.mse == 0.0) ? std::numeric_limits<double>::infinity()
                               : -10.0 * std::log10(r.mse);
    r.ssim = masked_ssim(pred, ref, m);
    r.mask_voxels = m.count();
    return r;
}

AggregateReport aggregate_reports(const std::vector<MetricReport>& reports) {
    AggregateReport agg;
    agg.count = static_cast<int>(reports.size());
    if (reports.empty()) return agg;
    auto stats = [&](auto getter) {
        AggregateStats s;
        double sum = 0.0;
        for (const auto& r : reports) sum += getter(r);
        s.mean = sum / reports.size();
        double var = 0.0;
        for (const auto& r : reports) {
            const double d = getter(r) - s.mean;
            var += d * d;
        }
        s.stddev = std::sqrt(var / reports.size());
        return s;
    };
    agg.mse = stats([](const MetricReport& r) { return r.mse; });
    agg.psnr_db = stats([](const MetricReport& r) { return r.psnr_db; });
    agg.ssim = stats([](const MetricReport& r) { return r.ssim; });
    return agg;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& before,
                                    const std::vector<double>& after) {
    if (before.size() != after.size())
        throw InvalidInput("wilcoxon: before/after lengths differ");
    if (before.empty()) throw InvalidInput("wilcoxon: empty input");

    std::vector<double> diffs;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double d = after[i] - before[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty())
        throw InvalidInput("wilcoxon: all differences are zero (no information)");

    const int n = static_cast<int>(diffs.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return std::abs(diffs[i]) < std::abs(diffs[j]);
    });

    // Mid-ranks for tied absolute differences.
    std::vector<double> rank(n);
    double tie_correction = 0.0; // sum of t^3 - t over tie groups
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
        const double mid = (i + 1 + j) / 2.0; // average of ranks i+1 .. j
        for (int k = i; k < j; ++k) rank[order[k]] = mid;
        const double t = j - i;
        tie_correction += t * t * t - t;
        i = j;
    }

    WilcoxonResult res;
    res.n = n;
    for (int i = 0; i < n; ++i) {
        if (diffs[i] > 0.0)
            res.w_plus += rank[i];
        else
            res.w_minus += rank[i];
    }

    if (n <= 12) {
        // Exact null distribution over all sign assignments.
        res.exact = true;
        const std::uint64_t total = 1ull << n;
        std::uint64_t ge = 0, le = 0; // W+ >= w_plus, W+ <= w_plus
        std::uint64_t ge_max = 0, le_min = 0;
        const double w_max = std::max(res.w_plus, res.w_minus);
        const double w_min = std::min(res.w_plus, res.w_minus);
        const double eps = 1e-9;
        for (std::uint64_t s = 0; s < total; ++s) {
            double w = 0.0;
            for (int i = 0; i < n; ++i)
                if (s & (1ull << i)) w += rank[i];
            if (w >= res.w_plus - eps) ++ge;
            if (w <= res.w_plus + eps) ++le;
            if (w >= w_max - eps) ++ge_max;
            if (w <= w_min + eps) ++le_min;
        }
        res.p_greater = static_cast<double>(ge) / static_cast<double>(total);
        res.p_less = static_cast<double>(le) / static_cast<double>(total);
        res.p_two_sided = std::min(
            1.0, static_cast<double>(ge_max + le_min) / static_cast<double>(total));
    } else {
        const double mean = n * (n + 1) / 4.0;
        const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_correction / 48.0;
        const double sd = std::sqrt(var);
        const double z = (res.w_plus - mean) / sd;
        res.p_greater = 1.0 - normal_cdf(z);
        res.p_less = normal_cdf(z);
        res.p_two_sided = std::min(1.0, 2.0 * std::min(res.p_greater, res.p_less));
    }
    return res;
}

} // namespace troch
