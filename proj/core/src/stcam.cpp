#include "canids/stcam.hpp"

#include <cmath>
#include <stdexcept>

namespace canids {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_cfg(const StcamConfig& c) {
    if (c.signals < 1 || c.window < 1 || c.horizon < 1 || c.filters < 1 || c.hidden < 1)
        throw std::runtime_error("stcam: all sizes must be >= 1");
    if (c.dropout < 0.0 || c.dropout >= 1.0)
        throw std::runtime_error("stcam: dropout must be in [0, 1)");
}

} // namespace

StcamParams StcamParams::zeros(const StcamConfig& cfg) {
    check_cfg(cfg);
    StcamParams p;
    p.cfg = cfg;
    const int in = cfg.hidden + cfg.filters;
    p.conv_w.resize(cfg.filters, cfg.signals * 3);
    p.conv_b.assign(static_cast<size_t>(cfg.filters), 0.0);
    for (Mat* w : {&p.w_f, &p.w_i, &p.w_o, &p.w_c}) w->resize(cfg.hidden, in);
    for (Vec* b : {&p.b_f, &p.b_i, &p.b_o, &p.b_c}) b->assign(static_cast<size_t>(cfg.hidden), 0.0);
    p.attn_v.assign(static_cast<size_t>(2 * cfg.hidden), 0.0);
    p.head_w.resize(cfg.signals * cfg.horizon, 2 * cfg.hidden);
    p.head_b.assign(static_cast<size_t>(cfg.signals * cfg.horizon), 0.0);
    return p;
}

StcamParams StcamParams::init(const StcamConfig& cfg, uint64_t seed) {
    StcamParams p = zeros(cfg);
    std::mt19937_64 rng(seed ^ 0x5354434Dull); // per-model stream
    init_gaussian(p.conv_w, rng, 1.0 / std::sqrt(static_cast<double>(cfg.signals * 3)));
    const double ls = 1.0 / std::sqrt(static_cast<double>(cfg.hidden + cfg.filters));
    for (Mat* w : {&p.w_f, &p.w_i, &p.w_o, &p.w_c}) init_gaussian(*w, rng, ls);
    // bias the forget gate open so early training keeps state
    std::fill(p.b_f.begin(), p.b_f.end(), 1.0);
    init_gaussian(p.attn_v, rng, 1.0 / std::sqrt(static_cast<double>(2 * cfg.hidden)));
    init_gaussian(p.head_w, rng, 1.0 / std::sqrt(static_cast<double>(2 * cfg.hidden)));
    return p;
}

std::vector<TensorRef> StcamParams::tensors() {
    return {
        ref("conv.w", conv_w), ref("conv.b", conv_b),
        ref("lstm.w_f", w_f),  ref("lstm.b_f", b_f),
        ref("lstm.w_i", w_i),  ref("lstm.b_i", b_i),
        ref("lstm.w_o", w_o),  ref("lstm.b_o", b_o),
        ref("lstm.w_c", w_c),  ref("lstm.b_c", b_c),
        ref("attn.v", attn_v),
        ref("head.w", head_w), ref("head.b", head_b),
    };
}

size_t StcamParams::param_count() const {
    // tensors() only hands out views, mutation never happens here
    return total_count(const_cast<StcamParams*>(this)->tensors());
}

void StcamParams::zero_all() {
    for (auto& t : tensors()) std::fill(t.data, t.data + t.count, 0.0);
}

Mat conv1d_relu(const Mat& x, const Mat& w, const Vec& b) {
    const int channels = x.rows, T = x.cols;
    const int filters = w.rows;
    if (w.cols != channels * 3)
        throw std::runtime_error("conv1d_relu: weight shape must be filters x (channels*3)");
    if (static_cast<int>(b.size()) != filters)
        throw std::runtime_error("conv1d_relu: bias size must equal filter count");
    Mat out(filters, T);
    for (int j = 0; j < filters; ++j) {
        for (int t = 0; t < T; ++t) {
            double acc = b[static_cast<size_t>(j)];
            for (int c = 0; c < channels; ++c)
                for (int k = 0; k < 3; ++k) {
                    int tt = t + k - 1;
                    if (tt >= 0 && tt < T) acc += w(j, c * 3 + k) * x(c, tt);
                }
            out(j, t) = acc > 0.0 ? acc : 0.0;
        }
    }
    return out;
}

namespace {

// shared by the standalone op and the cached forward
void conv_forward(const Mat& x, const StcamParams& p, Mat& pre, Mat& out) {
    const int M = p.cfg.signals, T = x.cols, F = p.cfg.filters;
    pre.resize(F, T);
    out.resize(F, T);
    for (int j = 0; j < F; ++j) {
        const double* wj = p.conv_w.row(j);
        for (int t = 0; t < T; ++t) {
            double acc = p.conv_b[static_cast<size_t>(j)];
            for (int c = 0; c < M; ++c) {
                const double* xc = x.row(c);
                const double* wc = wj + c * 3;
                if (t - 1 >= 0) acc += wc[0] * xc[t - 1];
                acc += wc[1] * xc[t];
                if (t + 1 < T) acc += wc[2] * xc[t + 1];
            }
            pre(j, t) = acc;
            out(j, t) = acc > 0.0 ? acc : 0.0;
        }
    }
}

void lstm_direction(const Mat& feat, const StcamParams& p, int dir, StcamCache& c) {
    const int T = feat.cols, H = p.cfg.hidden, F = p.cfg.filters;
    const int in = H + F;
    c.z[dir].resize(T, in);
    c.gate_f[dir].resize(T, H);
    c.gate_i[dir].resize(T, H);
    c.gate_o[dir].resize(T, H);
    c.gate_g[dir].resize(T, H);
    c.cell[dir].resize(T, H);
    c.tanh_c[dir].resize(T, H);

    Vec h(static_cast<size_t>(H), 0.0), cell(static_cast<size_t>(H), 0.0);
    for (int s = 0; s < T; ++s) {
        const int t = dir == 0 ? s : T - 1 - s;
        double* z = c.z[dir].row(t);
        for (int k = 0; k < H; ++k) z[k] = h[static_cast<size_t>(k)];
        for (int k = 0; k < F; ++k) z[H + k] = feat(k, t);

        for (int k = 0; k < H; ++k) {
            const double* wf = p.w_f.row(k);
            const double* wi = p.w_i.row(k);
            const double* wo = p.w_o.row(k);
            const double* wg = p.w_c.row(k);
            double af = p.b_f[static_cast<size_t>(k)];
            double ai = p.b_i[static_cast<size_t>(k)];
            double ao = p.b_o[static_cast<size_t>(k)];
            double ag = p.b_c[static_cast<size_t>(k)];
            for (int q = 0; q < in; ++q) {
                const double zq = z[q];
                af += wf[q] * zq;
                ai += wi[q] * zq;
                ao += wo[q] * zq;
                ag += wg[q] * zq;
            }
            const double f = sigmoid(af), i = sigmoid(ai), o = sigmoid(ao), g = std::tanh(ag);
            const double cc = f * cell[static_cast<size_t>(k)] + i * g;
            const double th = std::tanh(cc);
            c.gate_f[dir](t, k) = f;
            c.gate_i[dir](t, k) = i;
            c.gate_o[dir](t, k) = o;
            c.gate_g[dir](t, k) = g;
            c.cell[dir](t, k) = cc;
            c.tanh_c[dir](t, k) = th;
            cell[static_cast<size_t>(k)] = cc;
            h[static_cast<size_t>(k)] = o * th;
            c.hseq(t, dir * H + k) = h[static_cast<size_t>(k)];
        }
    }
}

void attention_forward(const Mat& hseq, const Vec& v, Vec& alpha, Vec& h_star) {
    const int T = hseq.rows, W = hseq.cols;
    alpha.assign(static_cast<size_t>(T), 0.0);
    double max_s = -1e300;
    for (int t = 0; t < T; ++t) {
        double s = 0.0;
        const double* hrow = hseq.row(t);
        for (int k = 0; k < W; ++k) s += v[static_cast<size_t>(k)] * hrow[k];
        alpha[static_cast<size_t>(t)] = s;
        max_s = std::max(max_s, s);
    }
    double sum = 0.0;
    for (auto& a : alpha) {
        a = std::exp(a - max_s);
        sum += a;
    }
    for (auto& a : alpha) a /= sum;
    h_star.assign(static_cast<size_t>(W), 0.0);
    for (int t = 0; t < T; ++t) {
        const double* hrow = hseq.row(t);
        const double a = alpha[static_cast<size_t>(t)];
        for (int k = 0; k < W; ++k) h_star[static_cast<size_t>(k)] += a * hrow[k];
    }
}

} // namespace

Mat bilstm(const Mat& features, const StcamParams& p) {
    if (features.rows != p.cfg.filters)
        throw std::runtime_error("bilstm: feature rows must equal filter count");
    StcamCache c;
    c.hseq.resize(features.cols, 2 * p.cfg.hidden);
    lstm_direction(features, p, 0, c);
    lstm_direction(features, p, 1, c);
    return c.hseq;
}

std::pair<Vec, Vec> attention_pool(const Mat& hseq, const Vec& v) {
    if (static_cast<int>(v.size()) != hseq.cols)
        throw std::runtime_error("attention_pool: scoring vector width mismatch");
    Vec alpha, h_star;
    attention_forward(hseq, v, alpha, h_star);
    return {h_star, alpha};
}

StcamOutput stcam_forward(const Mat& x, const StcamParams& p, bool training,
                          std::mt19937_64* rng, StcamCache* cache) {
    const auto& cfg = p.cfg;
    if (x.rows != cfg.signals || x.cols != cfg.window)
        throw std::runtime_error("stcam_forward: input must be signals x window");

    StcamCache local;
    StcamCache& c = cache ? *cache : local;
    c.x = x;

    conv_forward(x, p, c.conv_pre, c.conv_out);

    c.hseq.resize(cfg.window, 2 * cfg.hidden);
    lstm_direction(c.conv_out, p, 0, c);
    lstm_direction(c.conv_out, p, 1, c);

    attention_forward(c.hseq, p.attn_v, c.alpha, c.h_star);

    const size_t W = c.h_star.size();
    c.drop_mask.assign(W, 1.0);
    if (training && cfg.dropout > 0.0) {
        if (!rng) throw std::runtime_error("stcam_forward: training dropout needs an rng");
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double keep = 1.0 - cfg.dropout;
        for (auto& m : c.drop_mask) m = unif(*rng) < keep ? 1.0 / keep : 0.0;
    }
    c.head_in.resize(W);
    for (size_t k = 0; k < W; ++k) c.head_in[k] = c.h_star[k] * c.drop_mask[k];

    c.y_hat.resize(cfg.signals, cfg.horizon);
    const int out_n = cfg.signals * cfg.horizon;
    for (int r = 0; r < out_n; ++r) {
        const double* wr = p.head_w.row(r);
        double acc = p.head_b[static_cast<size_t>(r)];
        for (size_t k = 0; k < W; ++k) acc += wr[k] * c.head_in[k];
        c.y_hat(r / cfg.horizon, r % cfg.horizon) = acc;
    }

    StcamOutput out;
    out.y_hat = c.y_hat;
    out.x_a = c.h_star;
    return out;
}

void stcam_backward(const Mat& dy, const Vec& dx_a, const StcamCache& c,
                    const StcamParams& p, StcamParams& grads) {
    const auto& cfg = p.cfg;
    const int T = cfg.window, H = cfg.hidden, F = cfg.filters, M = cfg.signals;
    const int W = 2 * H;
    if (dy.rows != M || dy.cols != cfg.horizon)
        throw std::runtime_error("stcam_backward: dy must be signals x horizon");

    // dense head
    Vec dhead_in(static_cast<size_t>(W), 0.0);
    const int out_n = M * cfg.horizon;
    for (int r = 0; r < out_n; ++r) {
        const double g = dy(r / cfg.horizon, r % cfg.horizon);
        grads.head_b[static_cast<size_t>(r)] += g;
        double* gw = grads.head_w.row(r);
        const double* wr = p.head_w.row(r);
        for (int k = 0; k < W; ++k) {
            gw[k] += g * c.head_in[static_cast<size_t>(k)];
            dhead_in[static_cast<size_t>(k)] += g * wr[k];
        }
    }

    // dropout, then merge the distillation gradient that enters pre-dropout
    Vec dh_star(static_cast<size_t>(W), 0.0);
    for (int k = 0; k < W; ++k)
        dh_star[static_cast<size_t>(k)] =
            dhead_in[static_cast<size_t>(k)] * c.drop_mask[static_cast<size_t>(k)];
    if (!dx_a.empty()) {
        if (static_cast<int>(dx_a.size()) != W)
            throw std::runtime_error("stcam_backward: dx_a width mismatch");
        for (int k = 0; k < W; ++k) dh_star[static_cast<size_t>(k)] += dx_a[static_cast<size_t>(k)];
    }

    // attention pooling
    Mat dhseq(T, W);
    {
        Vec dalpha(static_cast<size_t>(T), 0.0);
        for (int t = 0; t < T; ++t) {
            const double* hrow = c.hseq.row(t);
            double s = 0.0;
            for (int k = 0; k < W; ++k) s += hrow[k] * dh_star[static_cast<size_t>(k)];
            dalpha[static_cast<size_t>(t)] = s;
        }
        double dot = 0.0;
        for (int t = 0; t < T; ++t)
            dot += dalpha[static_cast<size_t>(t)] * c.alpha[static_cast<size_t>(t)];
        for (int t = 0; t < T; ++t) {
            const double ds = c.alpha[static_cast<size_t>(t)] * (dalpha[static_cast<size_t>(t)] - dot);
            const double* hrow = c.hseq.row(t);
            double* drow = dhseq.row(t);
            const double a = c.alpha[static_cast<size_t>(t)];
            for (int k = 0; k < W; ++k) {
                grads.attn_v[static_cast<size_t>(k)] += ds * hrow[k];
                drow[k] = a * dh_star[static_cast<size_t>(k)] + ds * p.attn_v[static_cast<size_t>(k)];
            }
        }
    }

    // BPTT per direction, both accumulate into the shared gate tensors
    Mat dfeat(F, T);
    const int in = H + F;
    Vec dh(static_cast<size_t>(H)), dcell(static_cast<size_t>(H));
    Vec dzf(static_cast<size_t>(H)), dzi(static_cast<size_t>(H)), dzo(static_cast<size_t>(H)),
        dzg(static_cast<size_t>(H));
    for (int dir = 0; dir < 2; ++dir) {
        std::fill(dh.begin(), dh.end(), 0.0);
        std::fill(dcell.begin(), dcell.end(), 0.0);
        for (int s = T - 1; s >= 0; --s) {
            // visit in reverse processing order
            const int t = dir == 0 ? s : T - 1 - s;
            const bool first_step = s == 0;
            const int prev_t = dir == 0 ? t - 1 : t + 1;
            for (int k = 0; k < H; ++k) {
                const double dht = dh[static_cast<size_t>(k)] + dhseq(t, dir * H + k);
                const double f = c.gate_f[dir](t, k), i = c.gate_i[dir](t, k),
                             o = c.gate_o[dir](t, k), g = c.gate_g[dir](t, k);
                const double th = c.tanh_c[dir](t, k);
                double dc = dcell[static_cast<size_t>(k)] + dht * o * (1.0 - th * th);
                const double do_ = dht * th;
                const double cprev = first_step ? 0.0 : c.cell[dir](prev_t, k);
                const double df = dc * cprev;
                const double di = dc * g;
                const double dg = dc * i;
                dzf[static_cast<size_t>(k)] = df * f * (1.0 - f);
                dzi[static_cast<size_t>(k)] = di * i * (1.0 - i);
                dzo[static_cast<size_t>(k)] = do_ * o * (1.0 - o);
                dzg[static_cast<size_t>(k)] = dg * (1.0 - g * g);
                dcell[static_cast<size_t>(k)] = dc * f;
            }
            const double* z = c.z[dir].row(t);
            std::fill(dh.begin(), dh.end(), 0.0);
            for (int k = 0; k < H; ++k) {
                const double gf = dzf[static_cast<size_t>(k)], gi = dzi[static_cast<size_t>(k)],
                             go = dzo[static_cast<size_t>(k)], gg = dzg[static_cast<size_t>(k)];
                grads.b_f[static_cast<size_t>(k)] += gf;
                grads.b_i[static_cast<size_t>(k)] += gi;
                grads.b_o[static_cast<size_t>(k)] += go;
                grads.b_c[static_cast<size_t>(k)] += gg;
                double* gwf = grads.w_f.row(k);
                double* gwi = grads.w_i.row(k);
                double* gwo = grads.w_o.row(k);
                double* gwg = grads.w_c.row(k);
                const double* wf = p.w_f.row(k);
                const double* wi = p.w_i.row(k);
                const double* wo = p.w_o.row(k);
                const double* wg = p.w_c.row(k);
                for (int q = 0; q < in; ++q) {
                    const double zq = z[q];
                    gwf[q] += gf * zq;
                    gwi[q] += gi * zq;
                    gwo[q] += go * zq;
                    gwg[q] += gg * zq;
                    const double dzq = gf * wf[q] + gi * wi[q] + go * wo[q] + gg * wg[q];
                    if (q < H)
                        dh[static_cast<size_t>(q)] += dzq;
                    else
                        dfeat(q - H, t) += dzq;
                }
            }
            if (first_step) {
                std::fill(dh.begin(), dh.end(), 0.0);
                std::fill(dcell.begin(), dcell.end(), 0.0);
            }
        }
    }

    // conv through relu
    for (int j = 0; j < F; ++j) {
        double* gwj = grads.conv_w.row(j);
        for (int t = 0; t < T; ++t) {
            if (c.conv_pre(j, t) <= 0.0) continue;
            const double d = dfeat(j, t);
            if (d == 0.0) continue;
            grads.conv_b[static_cast<size_t>(j)] += d;
            for (int cidx = 0; cidx < M; ++cidx) {
                const double* xc = c.x.row(cidx);
                double* gw = gwj + cidx * 3;
                if (t - 1 >= 0) gw[0] += d * xc[t - 1];
                gw[1] += d * xc[t];
                if (t + 1 < T) gw[2] += d * xc[t + 1];
            }
        }
    }
}

} // namespace canids
