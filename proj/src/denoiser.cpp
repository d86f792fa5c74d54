#include "troch/denoiser.hpp"

#include "troch/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace troch {

void NetConfig::validate() const {
    if (in_channels != 24) throw InvalidInput("net config: in_channels must be 24");
    if (out_channels != 8) throw InvalidInput("net config: out_channels must be 8");
    if (base_channels < 1) throw InvalidInput("net config: base_channels must be >= 1");
    if (channel_mult.empty()) throw InvalidInput("net config: channel_mult must be non-empty");
    for (int m : channel_mult)
        if (m < 1) throw InvalidInput("net config: channel multipliers must be >= 1");
    if (res_blocks < 1) throw InvalidInput("net config: res_blocks must be >= 1");
    if (emb_dim < 2 || emb_dim % 2 != 0)
        throw InvalidInput("net config: emb_dim must be even and >= 2");
    if (!(head_init_scale >= 0.0))
        throw InvalidInput("net config: head_init_scale must be >= 0");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0))
        throw InvalidInput("train config: learning rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw InvalidInput("train config: momentum must lie in [0, 1)");
    if (batch_size < 1) throw InvalidInput("train config: batch size must be >= 1");
    if (iterations < 1) throw InvalidInput("train config: iterations must be >= 1");
    if (lambda_reg < 0.0) throw InvalidInput("train config: lambda_reg must be >= 0");
}

namespace {

// ---------------------------------------------------------------------------
// Dense channel-major tensor in double precision, x-fastest per channel.

struct Tensor {
    int c = 0, nx = 0, ny = 0, nz = 0;
    std::vector<double> v;

    void resize(int c_, int nx_, int ny_, int nz_) {
        c = c_;
        nx = nx_;
        ny = ny_;
        nz = nz_;
        v.assign(static_cast<std::size_t>(c) * nx * ny * nz, 0.0);
    }
    std::size_t spatial() const { return static_cast<std::size_t>(nx) * ny * nz; }
    double* chan(int ci) { return v.data() + ci * spatial(); }
    const double* chan(int ci) const { return v.data() + ci * spatial(); }
};

struct ConvDesc {
    int cin = 0, cout = 0, k = 1; // k is 1 or 3, zero padding (k-1)/2
    std::size_t w_off = 0, b_off = 0;
};

struct ResDesc {
    int ch = 0;
    ConvDesc conv1, conv2;
    std::size_t tw_off = 0, tb_off = 0; // time projection: emb -> per-channel bias
};

void conv_forward(const ConvDesc& cd, const double* P, const Tensor& in, Tensor& out) {
    out.resize(cd.cout, in.nx, in.ny, in.nz);
    const int nx = in.nx, ny = in.ny, nz = in.nz;
    const int pad = (cd.k - 1) / 2;
    const std::size_t k3 = static_cast<std::size_t>(cd.k) * cd.k * cd.k;

    for (int co = 0; co < cd.cout; ++co) {
        double* op = out.chan(co);
        const double bias = P[cd.b_off + co];
        std::fill(op, op + out.spatial(), bias);
    }
    for (int co = 0; co < cd.cout; ++co) {
        double* op = out.chan(co);
        for (int ci = 0; ci < cd.cin; ++ci) {
            const double* ip = in.chan(ci);
            const double* w =
                P + cd.w_off + (static_cast<std::size_t>(co) * cd.cin + ci) * k3;
            for (int kz = 0; kz < cd.k; ++kz)
                for (int ky = 0; ky < cd.k; ++ky)
                    for (int kx = 0; kx < cd.k; ++kx) {
                        const double wv = w[(kz * cd.k + ky) * cd.k + kx];
                        const int dz = kz - pad, dy = ky - pad, dx = kx - pad;
                        const int z0 = std::max(0, -dz), z1 = std::min(nz, nz - dz);
                        const int y0 = std::max(0, -dy), y1 = std::min(ny, ny - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(nx, nx - dx);
                        for (int z = z0; z < z1; ++z)
                            for (int y = y0; y < y1; ++y) {
                                double* orow = op + (static_cast<std::size_t>(z) * ny + y) * nx;
                                const double* irow =
                                    ip + (static_cast<std::size_t>(z + dz) * ny + (y + dy)) * nx + dx;
                                for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                            }
                    }
        }
    }
}

// Accumulates weight/bias gradients into G and writes the input gradient.
void conv_backward(const ConvDesc& cd, const double* P, double* G, const Tensor& in,
                   const Tensor& d_out, Tensor& d_in) {
    d_in.resize(cd.cin, in.nx, in.ny, in.nz);
    const int nx = in.nx, ny = in.ny, nz = in.nz;
    const int pad = (cd.k - 1) / 2;
    const std::size_t k3 = static_cast<std::size_t>(cd.k) * cd.k * cd.k;

    for (int co = 0; co < cd.cout; ++co) {
        const double* gp = d_out.chan(co);
        double bsum = 0.0;
        for (std::size_t i = 0; i < d_out.spatial(); ++i) bsum += gp[i];
        G[cd.b_off + co] += bsum;
    }
    for (int co = 0; co < cd.cout; ++co) {
        const double* gp = d_out.chan(co);
        for (int ci = 0; ci < cd.cin; ++ci) {
            const double* ip = in.chan(ci);
            double* dip = d_in.chan(ci);
            const std::size_t wbase =
                cd.w_off + (static_cast<std::size_t>(co) * cd.cin + ci) * k3;
            for (int kz = 0; kz < cd.k; ++kz)
                for (int ky = 0; ky < cd.k; ++ky)
                    for (int kx = 0; kx < cd.k; ++kx) {
                        const std::size_t widx = wbase + (kz * cd.k + ky) * cd.k + kx;
                        const double wv = P[widx];
                        double wgrad = 0.0;
                        const int dz = kz - pad, dy = ky - pad, dx = kx - pad;
                        const int z0 = std::max(0, -dz), z1 = std::min(nz, nz - dz);
                        const int y0 = std::max(0, -dy), y1 = std::min(ny, ny - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(nx, nx - dx);
                        for (int z = z0; z < z1; ++z)
                            for (int y = y0; y < y1; ++y) {
                                const double* grow =
                                    gp + (static_cast<std::size_t>(z) * ny + y) * nx;
                                const double* irow =
                                    ip + (static_cast<std::size_t>(z + dz) * ny + (y + dy)) * nx + dx;
                                double* drow =
                                    dip + (static_cast<std::size_t>(z + dz) * ny + (y + dy)) * nx + dx;
                                for (int x = x0; x < x1; ++x) {
                                    const double g = grow[x];
                                    wgrad += g * irow[x];
                                    drow[x] += wv * g;
                                }
                            }
                        G[widx] += wgrad;
                    }
        }
    }
}

void avgpool2_forward(const Tensor& in, Tensor& out) {
    out.resize(in.c, in.nx / 2, in.ny / 2, in.nz / 2);
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.chan(c);
        double* op = out.chan(c);
        for (int z = 0; z < out.nz; ++z)
            for (int y = 0; y < out.ny; ++y)
                for (int x = 0; x < out.nx; ++x) {
                    double s = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int d = 0; d < 2; ++d)
                                s += ip[(static_cast<std::size_t>(2 * z + a) * in.ny +
                                         (2 * y + b)) * in.nx +
                                        (2 * x + d)];
                    op[(static_cast<std::size_t>(z) * out.ny + y) * out.nx + x] = s / 8.0;
                }
    }
}

void avgpool2_backward(const Tensor& d_out, int in_nx, int in_ny, int in_nz, Tensor& d_in) {
    d_in.resize(d_out.c, in_nx, in_ny, in_nz);
    for (int c = 0; c < d_out.c; ++c) {
        const double* gp = d_out.chan(c);
        double* dp = d_in.chan(c);
        for (int z = 0; z < d_out.nz; ++z)
            for (int y = 0; y < d_out.ny; ++y)
                for (int x = 0; x < d_out.nx; ++x) {
                    const double g =
                        gp[(static_cast<std::size_t>(z) * d_out.ny + y) * d_out.nx + x] / 8.0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int d = 0; d < 2; ++d)
                                dp[(static_cast<std::size_t>(2 * z + a) * in_ny + (2 * y + b)) *
                                       in_nx +
                                   (2 * x + d)] += g;
                }
    }
}

void upsample2_forward(const Tensor& in, Tensor& out) {
    out.resize(in.c, in.nx * 2, in.ny * 2, in.nz * 2);
    for (int c = 0; c < in.c; ++c) {
        const double* ip = in.chan(c);
        double* op = out.chan(c);
        for (int z = 0; z < out.nz; ++z)
            for (int y = 0; y < out.ny; ++y)
                for (int x = 0; x < out.nx; ++x)
                    op[(static_cast<std::size_t>(z) * out.ny + y) * out.nx + x] =
                        ip[(static_cast<std::size_t>(z / 2) * in.ny + y / 2) * in.nx + x / 2];
    }
}

void upsample2_backward(const Tensor& d_out, int in_nx, int in_ny, int in_nz, Tensor& d_in) {
    d_in.resize(d_out.c, in_nx, in_ny, in_nz);
    for (int c = 0; c < d_out.c; ++c) {
        const double* gp = d_out.chan(c);
        double* dp = d_in.chan(c);
        for (int z = 0; z < d_out.nz; ++z)
            for (int y = 0; y < d_out.ny; ++y)
                for (int x = 0; x < d_out.nx; ++x)
                    dp[(static_cast<std::size_t>(z / 2) * in_ny + y / 2) * in_nx + x / 2] +=
                        gp[(static_cast<std::size_t>(z) * d_out.ny + y) * d_out.nx + x];
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void activation_forward(Activation act, const Tensor& in, Tensor& out) {
    out.resize(in.c, in.nx, in.ny, in.nz);
    if (act == Activation::Identity) {
        out.v = in.v;
        return;
    }
    for (std::size_t i = 0; i < in.v.size(); ++i) {
        const double x = in.v[i];
        out.v[i] = x * sigmoid(x);
    }
}

void activation_backward(Activation act, const Tensor& pre, const Tensor& d_out,
                         Tensor& d_in) {
    d_in.resize(pre.c, pre.nx, pre.ny, pre.nz);
    if (act == Activation::Identity) {
        d_in.v = d_out.v;
        return;
    }
    for (std::size_t i = 0; i < pre.v.size(); ++i) {
        const double x = pre.v[i];
        const double s = sigmoid(x);
        d_in.v[i] = d_out.v[i] * s * (1.0 + x * (1.0 - s));
    }
}

std::vector<double> sinusoidal_embedding(int t, int emb_dim) {
    const int half = emb_dim / 2;
    std::vector<double> e(emb_dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

struct ResCache {
    Tensor input, pre, act;
};

} // namespace

// ---------------------------------------------------------------------------

struct DenoiserNet::Impl {
    NetConfig cfg;
    std::vector<double> params;
    std::vector<double> grads;
    std::vector<ParamSegment> segments;

    ConvDesc conv_in, conv_out;
    std::vector<ConvDesc> down;              // scales-1 entries, 1x1x1
    std::vector<ConvDesc> up;                // scales-1 entries, 1x1x1
    std::vector<std::vector<ResDesc>> enc;   // scales x res_blocks
    std::vector<std::vector<ResDesc>> dec;   // (scales-1) x res_blocks, for scales-2 .. 0

    std::size_t cursor = 0;

    std::size_t alloc(const std::string& name, std::size_t count) {
        const std::size_t off = cursor;
        segments.push_back({name, off, count});
        cursor += count;
        return off;
    }

    ConvDesc make_conv(const std::string& name, int cin, int cout, int k) {
        ConvDesc cd;
        cd.cin = cin;
        cd.cout = cout;
        cd.k = k;
        cd.w_off = alloc(name + ".weight",
                         static_cast<std::size_t>(cout) * cin * k * k * k);
        cd.b_off = alloc(name + ".bias", static_cast<std::size_t>(cout));
        return cd;
    }

    ResDesc make_res(const std::string& name, int ch) {
        ResDesc rd;
        rd.ch = ch;
        rd.conv1 = make_conv(name + ".conv1", ch, ch, 3);
        rd.tw_off = alloc(name + ".time.weight",
                          static_cast<std::size_t>(ch) * cfg.emb_dim);
        rd.tb_off = alloc(name + ".time.bias", static_cast<std::size_t>(ch));
        rd.conv2 = make_conv(name + ".conv2", ch, ch, 3);
        return rd;
    }

    explicit Impl(NetConfig c) : cfg(std::move(c)) {
        cfg.validate();
        const int S = cfg.scales();
        std::vector<int> ch(S);
        for (int s = 0; s < S; ++s) ch[s] = cfg.base_channels * cfg.channel_mult[s];

        conv_in = make_conv("conv_in", cfg.in_channels, ch[0], 3);
        for (int s = 0; s < S; ++s) {
            if (s > 0)
                down.push_back(make_conv("down" + std::to_string(s), ch[s - 1], ch[s], 1));
            enc.emplace_back();
            for (int r = 0; r < cfg.res_blocks; ++r)
                enc.back().push_back(
                    make_res("enc" + std::to_string(s) + ".res" + std::to_string(r), ch[s]));
        }
        for (int s = S - 2; s >= 0; --s) {
            up.push_back(make_conv("up" + std::to_string(s), ch[s + 1], ch[s], 1));
            dec.emplace_back();
            for (int r = 0; r < cfg.res_blocks; ++r)
                dec.back().push_back(
                    make_res("dec" + std::to_string(s) + ".res" + std::to_string(r), ch[s]));
        }
        conv_out = make_conv("conv_out", ch[0], cfg.out_channels, 3);

        params.assign(cursor, 0.0);
        grads.assign(cursor, 0.0);
        init_params();
    }

    void init_params() {
        Rng rng(cfg.init_seed);
        auto init_conv = [&](const ConvDesc& cd, double scale) {
            const double std_dev =
                scale * std::sqrt(2.0 / (static_cast<double>(cd.cin) * cd.k * cd.k * cd.k));
            const std::size_t n =
                static_cast<std::size_t>(cd.cout) * cd.cin * cd.k * cd.k * cd.k;
            for (std::size_t i = 0; i < n; ++i)
                params[cd.w_off + i] = std_dev * rng.gaussian();
            // biases stay zero
        };
        auto init_time = [&](const ResDesc& rd) {
            const double std_dev = std::sqrt(1.0 / cfg.emb_dim);
            for (std::size_t i = 0; i < static_cast<std::size_t>(rd.ch) * cfg.emb_dim; ++i)
                params[rd.tw_off + i] = std_dev * rng.gaussian();
        };
        // Residual branches start at 0.1x so activations and gradients
        // stay near the input scale through depth (no normalization
        // layers in this net).
        init_conv(conv_in, 1.0);
        for (auto& c : down) init_conv(c, 1.0);
        for (auto& stage : enc)
            for (auto& r : stage) {
                init_conv(r.conv1, 1.0);
                init_conv(r.conv2, 0.1);
                init_time(r);
            }
        for (auto& c : up) init_conv(c, 1.0);
        for (auto& stage : dec)
            for (auto& r : stage) {
                init_conv(r.conv1, 1.0);
                init_conv(r.conv2, 0.1);
                init_time(r);
            }
        init_conv(conv_out, cfg.head_init_scale);
    }

    // ---- forward ----

    struct ChainCache {
        std::vector<ResCache> rc;
        Tensor out;
    };

    struct Trace {
        Tensor input;
        Tensor stem;
        std::vector<Tensor> stage_in;     // input to each encoder chain
        std::vector<ChainCache> enc_cc;   // S chains
        std::vector<Tensor> pooled;       // avgpool outputs per down transition
        std::vector<Tensor> upsampled;
        std::vector<Tensor> up_conv_out;
        std::vector<Tensor> dec_in;
        std::vector<ChainCache> dec_cc;   // S-1 chains
        Tensor head_in;
        Tensor output;
        std::vector<double> emb;
    };

    void res_forward(const ResDesc& rd, const Tensor& h, const std::vector<double>& emb,
                     ResCache& rc, Tensor& out) const {
        rc.input = h;
        conv_forward(rd.conv1, params.data(), h, rc.pre);
        for (int c = 0; c < rd.ch; ++c) {
            double tb = params[rd.tb_off + c];
            for (int e = 0; e < cfg.emb_dim; ++e)
                tb += params[rd.tw_off + static_cast<std::size_t>(c) * cfg.emb_dim + e] *
                      emb[e];
            double* p = rc.pre.chan(c);
            for (std::size_t i = 0; i < rc.pre.spatial(); ++i) p[i] += tb;
        }
        activation_forward(cfg.activation, rc.pre, rc.act);
        conv_forward(rd.conv2, params.data(), rc.act, out);
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += h.v[i];
    }

    void res_backward(const ResDesc& rd, const ResCache& rc, const Tensor& d_out,
                      const std::vector<double>& emb, Tensor& d_in) {
        Tensor d_act, d_pre;
        conv_backward(rd.conv2, params.data(), grads.data(), rc.act, d_out, d_act);
        activation_backward(cfg.activation, rc.pre, d_act, d_pre);
        for (int c = 0; c < rd.ch; ++c) {
            const double* p = d_pre.chan(c);
            double s = 0.0;
            for (std::size_t i = 0; i < d_pre.spatial(); ++i) s += p[i];
            grads[rd.tb_off + c] += s;
            for (int e = 0; e < cfg.emb_dim; ++e)
                grads[rd.tw_off + static_cast<std::size_t>(c) * cfg.emb_dim + e] +=
                    s * emb[e];
        }
        conv_backward(rd.conv1, params.data(), grads.data(), rc.input, d_pre, d_in);
        for (std::size_t i = 0; i < d_in.v.size(); ++i) d_in.v[i] += d_out.v[i];
    }

    void chain_forward(const std::vector<ResDesc>& chain, const Tensor& in,
                       const std::vector<double>& emb, ChainCache& cc) const {
        cc.rc.resize(chain.size());
        Tensor cur = in;
        for (std::size_t i = 0; i < chain.size(); ++i) {
            Tensor next;
            res_forward(chain[i], cur, emb, cc.rc[i], next);
            cur = std::move(next);
        }
        cc.out = std::move(cur);
    }

    Tensor chain_backward(const std::vector<ResDesc>& chain, const ChainCache& cc,
                          const Tensor& d_out, const std::vector<double>& emb) {
        Tensor d = d_out;
        for (int i = static_cast<int>(chain.size()) - 1; i >= 0; --i) {
            Tensor d_in;
            res_backward(chain[i], cc.rc[i], d, emb, d_in);
            d = std::move(d_in);
        }
        return d;
    }

    void check_dims(Dims bd) const {
        const int S = cfg.scales();
        const int factor = 1 << (S - 1);
        for (int a = 0; a < 3; ++a)
            if (bd[a] % factor != 0)
                throw InvalidInput("denoiser: band dims must be divisible by 2^(scales-1)");
    }

    void forward(const ConditionedInput& in, Trace& tr) const {
        in.validate();
        check_dims(in.x_t->band_dims);

        const Dims bd = in.x_t->band_dims;
        tr.input.resize(cfg.in_channels, bd[0], bd[1], bd[2]);
        const std::array<const WaveletCoeffs*, 3> parts{in.x_t, in.cond_m1, in.cond_m2};
        for (int p = 0; p < 3; ++p)
            for (int b = 0; b < 8; ++b) {
                double* dst = tr.input.chan(p * 8 + b);
                const auto& src = parts[p]->bands[b];
                for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
            }
        tr.emb = sinusoidal_embedding(in.t, cfg.emb_dim);

        const int S = cfg.scales();
        tr.stage_in.resize(S);
        tr.enc_cc.resize(S);
        tr.pooled.resize(S > 1 ? S - 1 : 0);

        conv_forward(conv_in, params.data(), tr.input, tr.stem);
        for (int s = 0; s < S; ++s) {
            if (s == 0) {
                tr.stage_in[0] = tr.stem;
            } else {
                avgpool2_forward(tr.enc_cc[s - 1].out, tr.pooled[s - 1]);
                conv_forward(down[s - 1], params.data(), tr.pooled[s - 1], tr.stage_in[s]);
            }
            chain_forward(enc[s], tr.stage_in[s], tr.emb, tr.enc_cc[s]);
        }

        const int D = S - 1; // decoder stages
        tr.upsampled.resize(D);
        tr.up_conv_out.resize(D);
        tr.dec_in.resize(D);
        tr.dec_cc.resize(D);

        const Tensor* h = &tr.enc_cc[S - 1].out;
        for (int i = 0; i < D; ++i) {
            const int s = S - 2 - i;
            upsample2_forward(*h, tr.upsampled[i]);
            conv_forward(up[i], params.data(), tr.upsampled[i], tr.up_conv_out[i]);
            tr.dec_in[i] = tr.up_conv_out[i];
            for (std::size_t j = 0; j < tr.dec_in[i].v.size(); ++j)
                tr.dec_in[i].v[j] += tr.enc_cc[s].out.v[j];
            chain_forward(dec[i], tr.dec_in[i], tr.emb, tr.dec_cc[i]);
            h = &tr.dec_cc[i].out;
        }
        tr.head_in = *h;
        conv_forward(conv_out, params.data(), tr.head_in, tr.output);
    }

    void backward(const Trace& tr, const Tensor& d_output) {
        const int S = cfg.scales();
        const int D = S - 1;

        Tensor d_h;
        conv_backward(conv_out, params.data(), grads.data(), tr.head_in, d_output, d_h);

        std::vector<Tensor> d_enc_out(S);
        for (int s = 0; s < S; ++s) {
            const Tensor& eo = tr.enc_cc[s].out;
            d_enc_out[s].resize(eo.c, eo.nx, eo.ny, eo.nz);
        }

        // Decoder ran i = 0..D-1 over scales s = S-2..0; walk it backwards.
        for (int i = D - 1; i >= 0; --i) {
            const int s = S - 2 - i;
            Tensor d_dec_in = chain_backward(dec[i], tr.dec_cc[i], d_h, tr.emb);
            for (std::size_t j = 0; j < d_dec_in.v.size(); ++j)
                d_enc_out[s].v[j] += d_dec_in.v[j]; // skip branch
            Tensor d_up_in;
            conv_backward(up[i], params.data(), grads.data(), tr.upsampled[i], d_dec_in,
                          d_up_in);
            const Tensor& prev =
                (i == 0) ? tr.enc_cc[S - 1].out : tr.dec_cc[i - 1].out;
            Tensor d_prev;
            upsample2_backward(d_up_in, prev.nx, prev.ny, prev.nz, d_prev);
            d_h = std::move(d_prev);
        }
        for (std::size_t j = 0; j < d_h.v.size(); ++j) d_enc_out[S - 1].v[j] += d_h.v[j];

        Tensor d_stage = std::move(d_enc_out[S - 1]);
        for (int s = S - 1; s >= 0; --s) {
            Tensor d_stage_in = chain_backward(enc[s], tr.enc_cc[s], d_stage, tr.emb);
            if (s > 0) {
                Tensor d_pooled;
                conv_backward(down[s - 1], params.data(), grads.data(), tr.pooled[s - 1],
                              d_stage_in, d_pooled);
                Tensor d_from_pool;
                const Tensor& eo = tr.enc_cc[s - 1].out;
                avgpool2_backward(d_pooled, eo.nx, eo.ny, eo.nz, d_from_pool);
                d_stage = std::move(d_enc_out[s - 1]);
                for (std::size_t j = 0; j < d_stage.v.size(); ++j)
                    d_stage.v[j] += d_from_pool.v[j];
            } else {
                Tensor d_input;
                conv_backward(conv_in, params.data(), grads.data(), tr.input, d_stage_in,
                              d_input);
            }
        }
    }

    // Loss over the output tensor; optionally also its gradient tensor.
    double loss_from_output(const Tensor& out, const WaveletCoeffs& target,
                            double lambda_reg, Tensor* d_out) const {
        const std::size_t n_band = target.band_size();
        const double n_total = 8.0 * static_cast<double>(n_band);
        if (out.spatial() != n_band)
            throw InvalidInput("denoiser loss: output/target dims mismatch");

        if (d_out) d_out->resize(out.c, out.nx, out.ny, out.nz);
        double mse = 0.0, l1 = 0.0;
        for (int b = 0; b < 8; ++b) {
            const double* p = out.chan(b);
            const bool hf =
                std::find(kHighFreqLossBands.begin(), kHighFreqLossBands.end(), b) !=
                kHighFreqLossBands.end();
            double* dp = d_out ? d_out->chan(b) : nullptr;
            for (std::size_t i = 0; i < n_band; ++i) {
                const double diff = p[i] - target.bands[b][i];
                mse += diff * diff;
                if (dp) dp[i] = 2.0 * diff / n_total;
                if (hf) {
                    l1 += std::abs(p[i]);
                    if (dp && p[i] != 0.0)
                        dp[i] += lambda_reg * (p[i] > 0.0 ? 1.0 : -1.0);
                }
            }
        }
        return mse / n_total + lambda_reg * l1;
    }
};

DenoiserNet::DenoiserNet(NetConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
DenoiserNet::DenoiserNet(const DenoiserNet& o) : impl_(std::make_unique<Impl>(*o.impl_)) {}
DenoiserNet::DenoiserNet(DenoiserNet&&) noexcept = default;
DenoiserNet& DenoiserNet::operator=(DenoiserNet o) {
    impl_ = std::move(o.impl_);
    return *this;
}
DenoiserNet::~DenoiserNet() = default;

const NetConfig& DenoiserNet::config() const { return impl_->cfg; }
std::size_t DenoiserNet::param_count() const { return impl_->params.size(); }
std::vector<double>& DenoiserNet::params() { return impl_->params; }
const std::vector<double>& DenoiserNet::params() const { return impl_->params; }
const std::vector<double>& DenoiserNet::grads() const { return impl_->grads; }
const std::vector<ParamSegment>& DenoiserNet::layout() const { return impl_->segments; }

void DenoiserNet::zero_segment(const std::string& name_prefix) {
    bool hit = false;
    for (const auto& seg : impl_->segments) {
        if (seg.name.rfind(name_prefix, 0) == 0) {
            std::fill_n(impl_->params.begin() + seg.offset, seg.count, 0.0);
            hit = true;
        }
    }
    if (!hit) throw InvalidInput("zero_segment: no segment named " + name_prefix);
}

void DenoiserNet::zero_grads() { std::fill(impl_->grads.begin(), impl_->grads.end(), 0.0); }

WaveletCoeffs DenoiserNet::predict(const ConditionedInput& input) const {
    Impl::Trace tr;
    impl_->forward(input, tr);
    WaveletCoeffs out(input.x_t->band_dims, input.x_t->source_spacing);
    for (int b = 0; b < 8; ++b) {
        const double* p = tr.output.chan(b);
        for (std::size_t i = 0; i < out.bands[b].size(); ++i)
            out.bands[b][i] = static_cast<float>(p[i]);
    }
    return out;
}

double DenoiserNet::loss_only(const ConditionedInput& input, const WaveletCoeffs& x0_target,
                              double lambda_reg) const {
    if (!input.x_t->same_shape(x0_target))
        throw InvalidInput("denoiser loss: input/target dims mismatch");
    Impl::Trace tr;
    impl_->forward(input, tr);
    return impl_->loss_from_output(tr.output, x0_target, lambda_reg, nullptr);
}

double DenoiserNet::loss_and_grad(const ConditionedInput& input,
                                  const WaveletCoeffs& x0_target, double lambda_reg,
                                  bool accumulate) {
    if (!input.x_t->same_shape(x0_target))
        throw InvalidInput("denoiser loss: input/target dims mismatch");
    if (!accumulate) zero_grads();
    Impl::Trace tr;
    impl_->forward(input, tr);
    Tensor d_out;
    const double loss = impl_->loss_from_output(tr.output, x0_target, lambda_reg, &d_out);
    impl_->backward(tr, d_out);
    return loss;
}

double training_loss(const WaveletCoeffs& pred, const WaveletCoeffs& target,
                     double lambda_reg) {
    if (!pred.same_shape(target)) throw InvalidInput("training_loss: dims mismatch");
    const double n_total = 8.0 * static_cast<double>(pred.band_size());
    double mse = 0.0, l1 = 0.0;
    for (int b = 0; b < 8; ++b) {
        for (std::size_t i = 0; i < pred.bands[b].size(); ++i) {
            const double diff =
                static_cast<double>(pred.bands[b][i]) - static_cast<double>(target.bands[b][i]);
            mse += diff * diff;
        }
    }
    for (int b : kHighFreqLossBands)
        for (float x : pred.bands[b]) l1 += std::abs(static_cast<double>(x));
    return mse / n_total + lambda_reg * l1;
}

std::vector<double> smooth_trace(const std::vector<double>& trace, int window) {
    if (window < 1) throw InvalidInput("smooth_trace: window must be >= 1");
    std::vector<double> out(trace.size());
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        acc += trace[i];
        ++count;
        if (count > static_cast<std::size_t>(window)) {
            acc -= trace[i - window];
            --count;
        }
        out[i] = acc / static_cast<double>(count);
    }
    return out;
}

TrainResult train_denoiser(DenoiserNet& net, const std::vector<TrainSample>& data,
                           const NoiseSchedule& schedule, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw InvalidInput("train: empty dataset");

    // Per-sample conditioning is fixed; transform once.
    struct Prepared {
        WaveletCoeffs x0, cond_m1, cond_m2;
    };
    std::vector<Prepared> prep;
    prep.reserve(data.size());
    for (const auto& s : data) {
        validate_volume(s.y0, "train sample");
        require_same_grid(s.y0, s.mask);
        Prepared p;
        p.x0 = dwt3(s.y0);
        p.cond_m1 = dwt3(apply_mask(s.y0, s.mask));
        p.cond_m2 = dwt3(mask_to_volume(s.mask));
        prep.push_back(std::move(p));
    }

    Rng rng(cfg.seed);
    std::vector<double> velocity(net.param_count(), 0.0);
    std::vector<double> step_grad(net.param_count(), 0.0);
    TrainResult result;
    result.loss_trace.reserve(cfg.iterations);

    for (int it = 0; it < cfg.iterations; ++it) {
        std::fill(step_grad.begin(), step_grad.end(), 0.0);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& p = prep[rng.uniform_index(prep.size())];
            const int t = 1 + static_cast<int>(rng.uniform_index(schedule.steps()));
            const WaveletCoeffs eps =
                gaussian_coeffs(p.x0.band_dims, p.x0.source_spacing, rng);
            const WaveletCoeffs x_t = q_sample(p.x0, t, eps, schedule);
            ConditionedInput in{&x_t, &p.cond_m1, &p.cond_m2, t};
            batch_loss += net.loss_and_grad(in, p.x0, cfg.lambda_reg, false);
            for (std::size_t i = 0; i < step_grad.size(); ++i)
                step_grad[i] += net.grads()[i];
        }
        batch_loss /= cfg.batch_size;
        const double inv_batch = 1.0 / cfg.batch_size;
        auto& params = net.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity[i] = cfg.momentum * velocity[i] -
                          cfg.learning_rate * step_grad[i] * inv_batch;
            params[i] += velocity[i];
        }
        result.loss_trace.push_back(batch_loss);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json config_to_json(const NetConfig& c) {
    json j;
    j["in_channels"] = c.in_channels;
    j["out_channels"] = c.out_channels;
    j["base_channels"] = c.base_channels;
    j["channel_mult"] = c.channel_mult;
    j["res_blocks"] = c.res_blocks;
    j["emb_dim"] = c.emb_dim;
    j["activation"] = (c.activation == Activation::SiLU) ? "silu" : "identity";
    j["init_seed"] = c.init_seed;
    j["head_init_scale"] = c.head_init_scale;
    return j;
}

NetConfig config_from_json(const json& j) {
    NetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_mult = j.at("channel_mult").get<std::vector<int>>();
    c.res_blocks = j.at("res_blocks").get<int>();
    c.emb_dim = j.at("emb_dim").get<int>();
    const auto act = j.at("activation").get<std::string>();
    if (act == "silu")
        c.activation = Activation::SiLU;
    else if (act == "identity")
        c.activation = Activation::Identity;
    else
        throw InvalidInput("checkpoint: unknown activation " + act);
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.head_init_scale = j.value("head_init_scale", 0.01);
    return c;
}

} // namespace

void save_checkpoint(const DenoiserNet& net, const std::string& path,
                     std::int64_t iterations, std::uint64_t seed) {
    json header;
    header["format"] = "troch-checkpoint-v1";
    header["config"] = config_to_json(net.config());
    header["iterations"] = iterations;
    header["seed"] = seed;
    header["param_count"] = net.param_count();
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path);
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> blob(net.param_count());
    for (std::size_t i = 0; i < blob.size(); ++i)
        blob[i] = static_cast<float>(net.params()[i]);
    f.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!f) throw RuntimeFailure("short write on " + path);
}

DenoiserNet load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot open " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f || len == 0 || len > (1u << 20)) throw InvalidInput(path + ": bad checkpoint header");
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f) throw InvalidInput(path + ": truncated checkpoint header");

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": bad checkpoint JSON: " + e.what());
    }
    if (header.value("format", "") != "troch-checkpoint-v1")
        throw InvalidInput(path + ": unknown checkpoint format");

    NetConfig cfg;
    std::size_t count = 0;
    try {
        cfg = config_from_json(header.at("config"));
        count = header.at("param_count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": bad checkpoint fields: " + e.what());
    }

    DenoiserNet net(cfg);
    if (net.param_count() != count)
        throw InvalidInput(path + ": parameter count does not match architecture");
    std::vector<float> blob(count);
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw InvalidInput(path + ": truncated parameter blob");
    for (std::size_t i = 0; i < count; ++i) net.params()[i] = blob[i];

    if (meta) {
        meta->config = cfg;
        meta->iterations = header.value("iterations", std::int64_t{0});
        meta->seed = header.value("seed", std::uint64_t{0});
    }
    return net;
}

} // namespace troch
