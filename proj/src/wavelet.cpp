#include "troch/wavelet.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace troch {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// In-place 1D Haar step over a strided line: the first half of the line
// receives lows, the second half highs.
void haar_line(float* base, std::size_t stride, int n, std::vector<float>& tmp) {
    const int half = n / 2;
    for (int i = 0; i < half; ++i) {
        const double a = base[(2 * i) * stride];
        const double b = base[(2 * i + 1) * stride];
        tmp[i] = static_cast<float>((a + b) * kInvSqrt2);
        tmp[half + i] = static_cast<float>((a - b) * kInvSqrt2);
    }
    for (int i = 0; i < n; ++i) base[i * stride] = tmp[i];
}

void haar_line_inverse(float* base, std::size_t stride, int n, std::vector<float>& tmp) {
    const int half = n / 2;
    for (int i = 0; i < half; ++i) {
        const double lo = base[i * stride];
        const double hi = base[(half + i) * stride];
        tmp[2 * i] = static_cast<float>((lo + hi) * kInvSqrt2);
        tmp[2 * i + 1] = static_cast<float>((lo - hi) * kInvSqrt2);
    }
    for (int i = 0; i < n; ++i) base[i * stride] = tmp[i];
}

} // namespace

void validate_coeffs(const WaveletCoeffs& c, const std::string& what) {
    if (c.band_dims[0] <= 0 || c.band_dims[1] <= 0 || c.band_dims[2] <= 0)
        throw InvalidInput(what + ": band dims must be positive");
    const std::size_t n = c.band_size();
    for (int b = 0; b < 8; ++b) {
        if (c.bands[b].size() != n)
            throw InvalidInput(what + ": band " + kBandNames[b] + " has inconsistent size");
        for (float x : c.bands[b])
            if (!std::isfinite(x)) throw InvalidInput(what + ": non-finite coefficient");
    }
}

WaveletCoeffs dwt3(const Volume& v) {
    validate_volume(v);
    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    if (nx % 2 || ny % 2 || nz % 2)
        throw InvalidInput("dwt3: all dims must be even");

    // Work on a scratch copy; after the three passes each octant of the
    // scratch volume holds one subband (low half first along each axis).
    std::vector<float> w = v.data;
    std::vector<float> tmp(static_cast<std::size_t>(std::max({nx, ny, nz})));
    const std::size_t sx = 1, sy = static_cast<std::size_t>(nx),
                      sz = static_cast<std::size_t>(nx) * ny;

    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            haar_line(w.data() + z * sz + y * sy, sx, nx, tmp);
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x)
            haar_line(w.data() + z * sz + x * sx, sy, ny, tmp);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            haar_line(w.data() + y * sy + x * sx, sz, nz, tmp);

    const int hx = nx / 2, hy = ny / 2, hz = nz / 2;
    WaveletCoeffs c({hx, hy, hz}, v.spacing);
    for (int b = 0; b < 8; ++b) {
        const int ox = (b & 1) ? hx : 0;
        const int oy = (b & 2) ? hy : 0;
        const int oz = (b & 4) ? hz : 0;
        for (int z = 0; z < hz; ++z)
            for (int y = 0; y < hy; ++y)
                for (int x = 0; x < hx; ++x)
                    c.bands[b][x + static_cast<std::size_t>(hx) * (y + static_cast<std::size_t>(hy) * z)] =
                        w[(ox + x) * sx + (oy + y) * sy + (oz + z) * sz];
    }
    return c;
}

Volume idwt3(const WaveletCoeffs& c) {
    validate_coeffs(c);
    const int hx = c.band_dims[0], hy = c.band_dims[1], hz = c.band_dims[2];
    const int nx = 2 * hx, ny = 2 * hy, nz = 2 * hz;

    std::vector<float> w(static_cast<std::size_t>(nx) * ny * nz);
    const std::size_t sx = 1, sy = static_cast<std::size_t>(nx),
                      sz = static_cast<std::size_t>(nx) * ny;
    for (int b = 0; b < 8; ++b) {
        const int ox = (b & 1) ? hx : 0;
        const int oy = (b & 2) ? hy : 0;
        const int oz = (b & 4) ? hz : 0;
        for (int z = 0; z < hz; ++z)
            for (int y = 0; y < hy; ++y)
                for (int x = 0; x < hx; ++x)
                    w[(ox + x) * sx + (oy + y) * sy + (oz + z) * sz] =
                        c.bands[b][x + static_cast<std::size_t>(hx) * (y + static_cast<std::size_t>(hy) * z)];
    }

    std::vector<float> tmp(static_cast<std::size_t>(std::max({nx, ny, nz})));
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            haar_line_inverse(w.data() + y * sy + x * sx, sz, nz, tmp);
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x)
            haar_line_inverse(w.data() + z * sz + x * sx, sy, ny, tmp);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            haar_line_inverse(w.data() + z * sz + y * sy, sx, nx, tmp);

    Volume out({nx, ny, nz}, c.source_spacing);
    out.data = std::move(w);
    return out;
}

void save_coeffs(const WaveletCoeffs& c, const std::string& path) {
    validate_coeffs(c);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path);
    for (int b = 0; b < 8; ++b)
        f.write(reinterpret_cast<const char*>(c.bands[b].data()),
                static_cast<std::streamsize>(c.bands[b].size() * sizeof(float)));
    if (!f) throw RuntimeFailure("short write on " + path);

    json j;
    j["band_dims"] = {c.band_dims[0], c.band_dims[1], c.band_dims[2]};
    j["source_spacing_mm"] = {c.source_spacing[0], c.source_spacing[1], c.source_spacing[2]};
    j["dtype"] = "f32le";
    j["order"] = "x-fastest";
    j["bands"] = kBandNames;
    std::ofstream sf(path + ".json");
    if (!sf) throw RuntimeFailure("cannot write sidecar for " + path);
    sf << j.dump(2) << "\n";
}

WaveletCoeffs load_coeffs(const std::string& path) {
    std::ifstream sf(path + ".json");
    if (!sf) throw InvalidInput("missing sidecar for " + path);
    json j;
    try {
        sf >> j;
    } catch (const json::exception& e) {
        throw InvalidInput("bad sidecar for " + path + ": " + e.what());
    }
    Dims bd;
    Spacing sp;
    try {
        for (int a = 0; a < 3; ++a) {
            bd[a] = j.at("band_dims")[a].get<int>();
            sp[a] = j.at("source_spacing_mm")[a].get<double>();
        }
    } catch (const json::exception& e) {
        throw InvalidInput("bad sidecar for " + path + ": " + e.what());
    }

    WaveletCoeffs c(bd, sp);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open " + path);
    for (int b = 0; b < 8; ++b) {
        f.read(reinterpret_cast<char*>(c.bands[b].data()),
               static_cast<std::streamsize>(c.bands[b].size() * sizeof(float)));
        if (!f) throw InvalidInput(path + ": data shorter than band dims require");
    }
    validate_coeffs(c);
    return c;
}

} // namespace troch
