#include "canids/patchst.hpp"

#include <cmath>
#include <stdexcept>

namespace canids {

namespace {

void check_cfg(const PatchstConfig& c) {
    if (c.patch_len < 1 || c.stride < 1 || c.dim < 1 || c.heads < 1 || c.layers < 1 ||
        c.ff_dim < 1 || c.horizon < 1)
        throw std::runtime_error("patchst: all sizes must be >= 1");
    if (c.window < c.patch_len)
        throw std::runtime_error("patchst: window must be >= patch_len");
    if (c.dim % c.heads != 0)
        throw std::runtime_error("patchst: dim must be divisible by heads");
}

// layer norm across the token axis, one row (feature) at a time
void norm_rows(const Mat& x, const Vec& g, const Vec& b, bool relu, double eps, Vec& mu,
               Vec& inv_std, Mat& xhat, Mat& pre, Mat& out) {
    const int D = x.rows, N = x.cols;
    mu.assign(static_cast<size_t>(D), 0.0);
    inv_std.assign(static_cast<size_t>(D), 0.0);
    xhat.resize(D, N);
    pre.resize(D, N);
    out.resize(D, N);
    for (int d = 0; d < D; ++d) {
        const double* row = x.row(d);
        double m = 0.0;
        for (int n = 0; n < N; ++n) m += row[n];
        m /= N;
        double var = 0.0;
        for (int n = 0; n < N; ++n) {
            const double c = row[n] - m;
            var += c * c;
        }
        var /= N;
        const double is = 1.0 / std::sqrt(var + eps);
        mu[static_cast<size_t>(d)] = m;
        inv_std[static_cast<size_t>(d)] = is;
        const double gd = g[static_cast<size_t>(d)], bd = b[static_cast<size_t>(d)];
        for (int n = 0; n < N; ++n) {
            const double xh = (row[n] - m) * is;
            const double pr = gd * xh + bd;
            xhat(d, n) = xh;
            pre(d, n) = pr;
            out(d, n) = relu && pr < 0.0 ? 0.0 : pr;
        }
    }
}

void norm_rows_backward(const Mat& dout, const PatchstConfig& cfg, const Vec& g,
                        const Vec& inv_std, const Mat& xhat, const Mat& pre, Vec& dg, Vec& db,
                        Mat& dx) {
    const int D = dout.rows, N = dout.cols;
    dx.resize(D, N);
    for (int d = 0; d < D; ++d) {
        const double gd = g[static_cast<size_t>(d)];
        const double is = inv_std[static_cast<size_t>(d)];
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        // first pass: gate through the optional relu, accumulate row sums
        for (int n = 0; n < N; ++n) {
            double dpre = dout(d, n);
            if (cfg.relu_layer_norm && pre(d, n) <= 0.0) dpre = 0.0;
            dg[static_cast<size_t>(d)] += dpre * xhat(d, n);
            db[static_cast<size_t>(d)] += dpre;
            const double dxh = dpre * gd;
            dx(d, n) = dxh; // hold dxhat here for the second pass
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xhat(d, n);
        }
        const double mean_dxh = sum_dxh / N;
        const double mean_dxh_xh = sum_dxh_xh / N;
        for (int n = 0; n < N; ++n)
            dx(d, n) = is * (dx(d, n) - mean_dxh - xhat(d, n) * mean_dxh_xh);
    }
}

void encoder_forward(const Mat& tokens, const EncoderLayerParams& lp, const PatchstConfig& cfg,
                     PatchstLayerCache& c) {
    const int D = cfg.dim, H = cfg.heads, dk = cfg.head_dim();
    const int N = tokens.cols;
    if (tokens.rows != D) throw std::runtime_error("encoder_layer: token width != dim");
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    c.x_in = tokens;
    c.q.assign(static_cast<size_t>(H), Mat());
    c.k.assign(static_cast<size_t>(H), Mat());
    c.v.assign(static_cast<size_t>(H), Mat());
    c.p.assign(static_cast<size_t>(H), Mat());
    c.concat.resize(H * D, N);

    for (int h = 0; h < H; ++h) {
        Mat& Q = c.q[static_cast<size_t>(h)];
        Mat& K = c.k[static_cast<size_t>(h)];
        Mat& V = c.v[static_cast<size_t>(h)];
        Mat& P = c.p[static_cast<size_t>(h)];
        Q.resize(N, dk);
        K.resize(N, dk);
        V.resize(N, D);
        P.resize(N, N);
        const Mat& wq = lp.w_q[static_cast<size_t>(h)];
        const Mat& wk = lp.w_k[static_cast<size_t>(h)];
        const Mat& wv = lp.w_v[static_cast<size_t>(h)];
        for (int n = 0; n < N; ++n) {
            for (int a = 0; a < dk; ++a) {
                double q = 0.0, k = 0.0;
                for (int d = 0; d < D; ++d) {
                    q += tokens(d, n) * wq(d, a);
                    k += tokens(d, n) * wk(d, a);
                }
                Q(n, a) = q;
                K(n, a) = k;
            }
            for (int e = 0; e < D; ++e) {
                double v = 0.0;
                for (int d = 0; d < D; ++d) v += tokens(d, n) * wv(d, e);
                V(n, e) = v;
            }
        }
        // scores with a stable row softmax
        for (int n = 0; n < N; ++n) {
            double max_s = -1e300;
            for (int m = 0; m < N; ++m) {
                double s = 0.0;
                for (int a = 0; a < dk; ++a) s += Q(n, a) * K(m, a);
                s *= scale;
                P(n, m) = s;
                max_s = std::max(max_s, s);
            }
            double sum = 0.0;
            for (int m = 0; m < N; ++m) {
                P(n, m) = std::exp(P(n, m) - max_s);
                sum += P(n, m);
            }
            for (int m = 0; m < N; ++m) P(n, m) /= sum;
        }
        for (int e = 0; e < D; ++e)
            for (int n = 0; n < N; ++n) {
                double o = 0.0;
                for (int m = 0; m < N; ++m) o += P(n, m) * V(m, e);
                c.concat(h * D + e, n) = o;
            }
    }

    c.x_attn.resize(D, N);
    for (int d = 0; d < D; ++d)
        for (int n = 0; n < N; ++n) {
            double acc = 0.0;
            for (int r = 0; r < H * D; ++r) acc += lp.w_mix(d, r) * c.concat(r, n);
            c.x_attn(d, n) = acc;
        }

    c.res1.resize(D, N);
    for (size_t i = 0; i < c.res1.d.size(); ++i) c.res1.d[i] = c.x_in.d[i] + c.x_attn.d[i];
    norm_rows(c.res1, lp.ln1_g, lp.ln1_b, cfg.relu_layer_norm, cfg.ln_eps, c.mu1, c.inv_std1,
              c.xhat1, c.pre1, c.x_norm);

    const int FD = cfg.ff_dim;
    c.ff_pre.resize(FD, N);
    c.ff_act.resize(FD, N);
    for (int f = 0; f < FD; ++f) {
        const double* wrow = lp.w_ff1.row(f);
        for (int n = 0; n < N; ++n) {
            double acc = lp.b_ff1[static_cast<size_t>(f)];
            for (int d = 0; d < D; ++d) acc += wrow[d] * c.x_norm(d, n);
            c.ff_pre(f, n) = acc;
            c.ff_act(f, n) = acc > 0.0 ? acc : 0.0;
        }
    }
    c.x_ff.resize(D, N);
    for (int d = 0; d < D; ++d) {
        const double* wrow = lp.w_ff2.row(d);
        for (int n = 0; n < N; ++n) {
            double acc = lp.b_ff2[static_cast<size_t>(d)];
            for (int f = 0; f < FD; ++f) acc += wrow[f] * c.ff_act(f, n);
            c.x_ff(d, n) = acc;
        }
    }

    c.res2.resize(D, N);
    for (size_t i = 0; i < c.res2.d.size(); ++i) c.res2.d[i] = c.x_norm.d[i] + c.x_ff.d[i];
    norm_rows(c.res2, lp.ln2_g, lp.ln2_b, cfg.relu_layer_norm, cfg.ln_eps, c.mu2, c.inv_std2,
              c.xhat2, c.pre2, c.out);
}

// returns dX for the layer input, accumulating parameter grads
void encoder_backward(const Mat& dout, const PatchstLayerCache& c, const EncoderLayerParams& lp,
                      const PatchstConfig& cfg, EncoderLayerParams& g, Mat& dx_in) {
    const int D = cfg.dim, H = cfg.heads, dk = cfg.head_dim(), FD = cfg.ff_dim;
    const int N = dout.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Mat dres2;
    norm_rows_backward(dout, cfg, lp.ln2_g, c.inv_std2, c.xhat2, c.pre2, g.ln2_g, g.ln2_b, dres2);

    // res2 = x_norm + x_ff
    Mat dx_norm = dres2;
    const Mat& dx_ff = dres2;

    // feed-forward
    Mat dff_act(FD, N);
    for (int d = 0; d < D; ++d) {
        const double* wrow = lp.w_ff2.row(d);
        double* grow = g.w_ff2.row(d);
        for (int n = 0; n < N; ++n) {
            const double dv = dx_ff(d, n);
            g.b_ff2[static_cast<size_t>(d)] += dv;
            for (int f = 0; f < FD; ++f) {
                grow[f] += dv * c.ff_act(f, n);
                dff_act(f, n) += dv * wrow[f];
            }
        }
    }
    for (int f = 0; f < FD; ++f) {
        const double* wrow = lp.w_ff1.row(f);
        double* grow = g.w_ff1.row(f);
        for (int n = 0; n < N; ++n) {
            double dpre = c.ff_pre(f, n) > 0.0 ? dff_act(f, n) : 0.0;
            if (dpre == 0.0) continue;
            g.b_ff1[static_cast<size_t>(f)] += dpre;
            for (int d = 0; d < D; ++d) {
                grow[d] += dpre * c.x_norm(d, n);
                dx_norm(d, n) += dpre * wrow[d];
            }
        }
    }

    Mat dres1;
    norm_rows_backward(dx_norm, cfg, lp.ln1_g, c.inv_std1, c.xhat1, c.pre1, g.ln1_g, g.ln1_b,
                       dres1);

    // res1 = x_in + x_attn
    dx_in = dres1;
    const Mat& dx_attn = dres1;

    // output mix
    Mat dconcat(H * D, N);
    for (int d = 0; d < D; ++d) {
        const double* wrow = lp.w_mix.row(d);
        double* grow = g.w_mix.row(d);
        for (int n = 0; n < N; ++n) {
            const double dv = dx_attn(d, n);
            for (int r = 0; r < H * D; ++r) {
                grow[r] += dv * c.concat(r, n);
                dconcat(r, n) += dv * wrow[r];
            }
        }
    }

    // heads
    Mat dOV(N, D), dP(N, N), dS(N, N), dQ(N, dk), dK(N, dk), dV(N, D);
    for (int h = 0; h < H; ++h) {
        const Mat& Q = c.q[static_cast<size_t>(h)];
        const Mat& K = c.k[static_cast<size_t>(h)];
        const Mat& V = c.v[static_cast<size_t>(h)];
        const Mat& P = c.p[static_cast<size_t>(h)];
        for (int n = 0; n < N; ++n)
            for (int e = 0; e < D; ++e) dOV(n, e) = dconcat(h * D + e, n);

        dV.zero();
        for (int n = 0; n < N; ++n) {
            for (int m = 0; m < N; ++m) {
                double acc = 0.0;
                for (int e = 0; e < D; ++e) acc += dOV(n, e) * V(m, e);
                dP(n, m) = acc;
            }
            for (int m = 0; m < N; ++m)
                for (int e = 0; e < D; ++e) dV(m, e) += P(n, m) * dOV(n, e);
        }
        // softmax rows
        for (int n = 0; n < N; ++n) {
            double dot = 0.0;
            for (int m = 0; m < N; ++m) dot += dP(n, m) * P(n, m);
            for (int m = 0; m < N; ++m) dS(n, m) = P(n, m) * (dP(n, m) - dot);
        }
        dQ.zero();
        dK.zero();
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < N; ++m) {
                const double ds = dS(n, m) * scale;
                if (ds == 0.0) continue;
                for (int a = 0; a < dk; ++a) {
                    dQ(n, a) += ds * K(m, a);
                    dK(m, a) += ds * Q(n, a);
                }
            }

        Mat& gq = g.w_q[static_cast<size_t>(h)];
        Mat& gk = g.w_k[static_cast<size_t>(h)];
        Mat& gv = g.w_v[static_cast<size_t>(h)];
        const Mat& wq = lp.w_q[static_cast<size_t>(h)];
        const Mat& wk = lp.w_k[static_cast<size_t>(h)];
        const Mat& wv = lp.w_v[static_cast<size_t>(h)];
        for (int n = 0; n < N; ++n) {
            for (int a = 0; a < dk; ++a) {
                const double dq = dQ(n, a), dkv = dK(n, a);
                for (int d = 0; d < D; ++d) {
                    gq(d, a) += c.x_in(d, n) * dq;
                    gk(d, a) += c.x_in(d, n) * dkv;
                    dx_in(d, n) += wq(d, a) * dq + wk(d, a) * dkv;
                }
            }
            for (int e = 0; e < D; ++e) {
                const double dv = dV(n, e);
                if (dv == 0.0) continue;
                for (int d = 0; d < D; ++d) {
                    gv(d, e) += c.x_in(d, n) * dv;
                    dx_in(d, n) += wv(d, e) * dv;
                }
            }
        }
    }
}

} // namespace

PatchstParams PatchstParams::zeros(const PatchstConfig& cfg) {
    check_cfg(cfg);
    PatchstParams p;
    p.cfg = cfg;
    const int D = cfg.dim, dk = cfg.head_dim();
    p.w_embed.resize(D, cfg.patch_len);
    p.w_pos.resize(D, cfg.patch_len);
    p.b_embed.assign(static_cast<size_t>(D), 0.0);
    p.b_pos.assign(static_cast<size_t>(D), 0.0);
    p.enc.resize(static_cast<size_t>(cfg.layers));
    for (auto& l : p.enc) {
        l.w_q.assign(static_cast<size_t>(cfg.heads), Mat(D, dk));
        l.w_k.assign(static_cast<size_t>(cfg.heads), Mat(D, dk));
        l.w_v.assign(static_cast<size_t>(cfg.heads), Mat(D, D));
        l.w_mix.resize(D, cfg.heads * D);
        l.ln1_g.assign(static_cast<size_t>(D), 0.0);
        l.ln1_b.assign(static_cast<size_t>(D), 0.0);
        l.w_ff1.resize(cfg.ff_dim, D);
        l.b_ff1.assign(static_cast<size_t>(cfg.ff_dim), 0.0);
        l.w_ff2.resize(D, cfg.ff_dim);
        l.b_ff2.assign(static_cast<size_t>(D), 0.0);
        l.ln2_g.assign(static_cast<size_t>(D), 0.0);
        l.ln2_b.assign(static_cast<size_t>(D), 0.0);
    }
    p.head_w.resize(cfg.horizon, D * cfg.n_patches());
    p.head_b.assign(static_cast<size_t>(cfg.horizon), 0.0);
    return p;
}

PatchstParams PatchstParams::init(const PatchstConfig& cfg, uint64_t seed) {
    PatchstParams p = zeros(cfg);
    std::mt19937_64 rng(seed ^ 0x5041544348ull);
    const int D = cfg.dim;
    init_gaussian(p.w_embed, rng, 1.0 / std::sqrt(static_cast<double>(cfg.patch_len)));
    init_gaussian(p.w_pos, rng, 1.0 / std::sqrt(static_cast<double>(cfg.patch_len)));
    for (auto& l : p.enc) {
        const double s = 1.0 / std::sqrt(static_cast<double>(D));
        for (auto& w : l.w_q) init_gaussian(w, rng, s);
        for (auto& w : l.w_k) init_gaussian(w, rng, s);
        for (auto& w : l.w_v) init_gaussian(w, rng, s);
        init_gaussian(l.w_mix, rng, 1.0 / std::sqrt(static_cast<double>(cfg.heads * D)));
        init_gaussian(l.w_ff1, rng, s);
        init_gaussian(l.w_ff2, rng, 1.0 / std::sqrt(static_cast<double>(cfg.ff_dim)));
        std::fill(l.ln1_g.begin(), l.ln1_g.end(), 1.0);
        std::fill(l.ln2_g.begin(), l.ln2_g.end(), 1.0);
    }
    init_gaussian(p.head_w, rng, 1.0 / std::sqrt(static_cast<double>(D * cfg.n_patches())));
    return p;
}

void PatchstParams::zero_all() {
    for (auto& t : tensors()) std::fill(t.data, t.data + t.count, 0.0);
}

std::vector<TensorRef> PatchstParams::tensors() {
    std::vector<TensorRef> out;
    out.push_back(ref("embed.w", w_embed));
    out.push_back(ref("embed.b", b_embed));
    out.push_back(ref("pos.w", w_pos));
    out.push_back(ref("pos.b", b_pos));
    for (size_t l = 0; l < enc.size(); ++l) {
        auto& e = enc[l];
        const std::string pfx = "enc" + std::to_string(l) + ".";
        for (size_t h = 0; h < e.w_q.size(); ++h) {
            const std::string hp = pfx + "h" + std::to_string(h) + ".";
            out.push_back(ref(hp + "w_q", e.w_q[h]));
            out.push_back(ref(hp + "w_k", e.w_k[h]));
            out.push_back(ref(hp + "w_v", e.w_v[h]));
        }
        out.push_back(ref(pfx + "w_mix", e.w_mix));
        out.push_back(ref(pfx + "ln1.g", e.ln1_g));
        out.push_back(ref(pfx + "ln1.b", e.ln1_b));
        out.push_back(ref(pfx + "w_ff1", e.w_ff1));
        out.push_back(ref(pfx + "b_ff1", e.b_ff1));
        out.push_back(ref(pfx + "w_ff2", e.w_ff2));
        out.push_back(ref(pfx + "b_ff2", e.b_ff2));
        out.push_back(ref(pfx + "ln2.g", e.ln2_g));
        out.push_back(ref(pfx + "ln2.b", e.ln2_b));
    }
    out.push_back(ref("head.w", head_w));
    out.push_back(ref("head.b", head_b));
    return out;
}

size_t PatchstParams::param_count() const {
    return total_count(const_cast<PatchstParams*>(this)->tensors());
}

Mat patchify(const Vec& series, int patch_len, int stride) {
    const int T = static_cast<int>(series.size());
    if (patch_len < 1 || stride < 1) throw std::runtime_error("patchify: bad patch_len/stride");
    if (T < patch_len) throw std::runtime_error("patchify: series shorter than one patch");
    const int N = (T - patch_len) / stride + 2;

    Vec padded(series);
    padded.resize(static_cast<size_t>(T + stride), series.back());

    Mat out(patch_len, N);
    for (int n = 0; n < N; ++n) {
        const int start = n * stride;
        for (int j = 0; j < patch_len; ++j)
            out(j, n) = padded[static_cast<size_t>(start + j)];
    }
    return out;
}

Mat embed(const Mat& patches, const PatchstParams& p) {
    const int P = p.cfg.patch_len, D = p.cfg.dim, N = patches.cols;
    if (patches.rows != P) throw std::runtime_error("embed: patch rows != patch_len");
    Mat out(D, N);
    for (int d = 0; d < D; ++d) {
        const double* we = p.w_embed.row(d);
        const double* wp = p.w_pos.row(d);
        for (int n = 0; n < N; ++n) {
            double acc = p.b_embed[static_cast<size_t>(d)] + p.b_pos[static_cast<size_t>(d)];
            for (int j = 0; j < P; ++j) acc += (we[j] + wp[j]) * patches(j, n);
            out(d, n) = acc;
        }
    }
    return out;
}

Mat encoder_layer(const Mat& tokens, const EncoderLayerParams& lp, const PatchstConfig& cfg,
                  PatchstLayerCache* cache) {
    PatchstLayerCache local;
    PatchstLayerCache& c = cache ? *cache : local;
    encoder_forward(tokens, lp, cfg, c);
    return c.out;
}

Mat patchst_forward(const Mat& x, const PatchstParams& p, PatchstCache* cache) {
    const auto& cfg = p.cfg;
    if (x.cols != cfg.window)
        throw std::runtime_error("patchst_forward: input columns must equal window");
    const int M = x.rows, D = cfg.dim, N = cfg.n_patches();

    PatchstCache local;
    PatchstCache& c = cache ? *cache : local;
    c.channels.assign(static_cast<size_t>(M), PatchstChannelCache{});
    c.y_hat.resize(M, cfg.horizon);

    Vec series(static_cast<size_t>(cfg.window));
    for (int m = 0; m < M; ++m) {
        auto& ch = c.channels[static_cast<size_t>(m)];
        for (int t = 0; t < cfg.window; ++t) series[static_cast<size_t>(t)] = x(m, t);
        ch.patches = patchify(series, cfg.patch_len, cfg.stride);
        Mat tokens = embed(ch.patches, p);

        ch.layers.assign(static_cast<size_t>(cfg.layers), PatchstLayerCache{});
        for (int l = 0; l < cfg.layers; ++l) {
            encoder_forward(tokens, p.enc[static_cast<size_t>(l)], cfg,
                            ch.layers[static_cast<size_t>(l)]);
            tokens = ch.layers[static_cast<size_t>(l)].out;
        }

        ch.flat.assign(static_cast<size_t>(D * N), 0.0);
        for (int d = 0; d < D; ++d)
            for (int n = 0; n < N; ++n) ch.flat[static_cast<size_t>(d * N + n)] = tokens(d, n);

        for (int l = 0; l < cfg.horizon; ++l) {
            const double* wrow = p.head_w.row(l);
            double acc = p.head_b[static_cast<size_t>(l)];
            for (int i = 0; i < D * N; ++i) acc += wrow[i] * ch.flat[static_cast<size_t>(i)];
            c.y_hat(m, l) = acc;
        }
    }
    return c.y_hat;
}

void patchst_backward(const Mat& dy, const PatchstCache& cache, const PatchstParams& p,
                      PatchstParams& grads) {
    const auto& cfg = p.cfg;
    const int M = dy.rows, D = cfg.dim, N = cfg.n_patches();
    if (static_cast<size_t>(M) != cache.channels.size())
        throw std::runtime_error("patchst_backward: dy rows do not match cached channels");

    Mat dtokens(D, N), dnext;
    for (int m = 0; m < M; ++m) {
        const auto& ch = cache.channels[static_cast<size_t>(m)];

        // head
        dtokens.zero();
        for (int l = 0; l < cfg.horizon; ++l) {
            const double g = dy(m, l);
            grads.head_b[static_cast<size_t>(l)] += g;
            double* grow = grads.head_w.row(l);
            const double* wrow = p.head_w.row(l);
            for (int i = 0; i < D * N; ++i) {
                grow[i] += g * ch.flat[static_cast<size_t>(i)];
                dtokens.d[static_cast<size_t>(i)] += g * wrow[i];
            }
        }

        // encoder stack in reverse
        for (int l = cfg.layers - 1; l >= 0; --l) {
            encoder_backward(dtokens, ch.layers[static_cast<size_t>(l)],
                             p.enc[static_cast<size_t>(l)], cfg, grads.enc[static_cast<size_t>(l)],
                             dnext);
            dtokens = dnext;
        }

        // embedding: both projections see the same patch, so both accumulate
        for (int d = 0; d < D; ++d) {
            double* ge = grads.w_embed.row(d);
            double* gp = grads.w_pos.row(d);
            for (int n = 0; n < N; ++n) {
                const double dv = dtokens(d, n);
                grads.b_embed[static_cast<size_t>(d)] += dv;
                grads.b_pos[static_cast<size_t>(d)] += dv;
                for (int j = 0; j < cfg.patch_len; ++j) {
                    ge[j] += dv * ch.patches(j, n);
                    gp[j] += dv * ch.patches(j, n);
                }
            }
        }
    }
}

} // namespace canids
