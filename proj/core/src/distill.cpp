#include "canids/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace canids {

namespace {

void check_loss_cfg(const LossConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw std::runtime_error("loss: alpha and beta must be non-negative");
    if (cfg.temperature <= 0.0)
        throw std::runtime_error("loss: temperature must be positive");
}

// student predictions through the frozen teacher head; returns y (M x L) and
// optionally the per-channel tokens for the backward pass
Mat bridge_forward(const Vec& x_a, const PatchstParams& teacher, const AdapterParams& a,
                   Mat* tokens_out) {
    const int D = teacher.cfg.dim, N = teacher.cfg.n_patches(), L = teacher.cfg.horizon;
    const int MD = a.w.rows;
    if (MD % D != 0)
        throw std::runtime_error("ckd bridge: adapter rows must be a multiple of teacher dim");
    const int M = MD / D;
    if (a.w.cols != static_cast<int>(x_a.size()))
        throw std::runtime_error("ckd bridge: adapter width must match x_a");

    Mat y(M, L);
    if (tokens_out) tokens_out->resize(M, D);
    for (int m = 0; m < M; ++m) {
        // token for this channel
        Vec tok(static_cast<size_t>(D), 0.0);
        for (int d = 0; d < D; ++d) {
            const double* wrow = a.w.row(m * D + d);
            double acc = a.b[static_cast<size_t>(m * D + d)];
            for (size_t k = 0; k < x_a.size(); ++k) acc += wrow[k] * x_a[k];
            tok[static_cast<size_t>(d)] = acc;
            if (tokens_out) (*tokens_out)(m, d) = acc;
        }
        // repeated across the N patch slots, then the frozen head
        for (int l = 0; l < L; ++l) {
            const double* wrow = teacher.head_w.row(l);
            double acc = teacher.head_b[static_cast<size_t>(l)];
            for (int d = 0; d < D; ++d) {
                double wsum = 0.0;
                for (int n = 0; n < N; ++n) wsum += wrow[d * N + n];
                acc += wsum * tok[static_cast<size_t>(d)];
            }
            y(m, l) = acc;
        }
    }
    return y;
}

} // namespace

AdapterParams AdapterParams::zeros(int signals, int dim, int hidden2) {
    AdapterParams a;
    a.w.resize(signals * dim, hidden2);
    a.b.assign(static_cast<size_t>(signals * dim), 0.0);
    return a;
}

AdapterParams AdapterParams::init(int signals, int dim, int hidden2, uint64_t seed) {
    AdapterParams a = zeros(signals, dim, hidden2);
    std::mt19937_64 rng(seed ^ 0x414441505452ull);
    init_gaussian(a.w, rng, 1.0 / std::sqrt(static_cast<double>(hidden2)));
    return a;
}

std::vector<TensorRef> AdapterParams::tensors() {
    return {ref("adapter.w", w), ref("adapter.b", b)};
}

size_t AdapterParams::param_count() const {
    return w.size() + b.size();
}

Vec softmax_with_temperature(std::span<const double> logits, double temperature) {
    if (temperature <= 0.0) throw std::runtime_error("softmax: temperature must be positive");
    if (logits.empty()) throw std::runtime_error("softmax: empty input");
    Vec out(logits.size());
    double max_v = -std::numeric_limits<double>::infinity();
    for (double v : logits) max_v = std::max(max_v, v);
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - max_v) / temperature);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::runtime_error("kl_divergence: length mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue; // 0 * log 0 = 0
        if (q[i] <= 0.0) throw std::runtime_error("kl_divergence: q has a zero where p > 0");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double ckd_loss(const Vec& x_a, const PatchstParams& teacher, const Mat& p_t,
                const LossConfig& cfg) {
    check_loss_cfg(cfg);
    Mat p_hat = bridge_forward(x_a, teacher, cfg.adapter, nullptr);
    if (!p_hat.same_shape(p_t))
        throw std::runtime_error("ckd_loss: teacher prediction shape mismatch");
    Vec st = softmax_with_temperature(p_hat.d, cfg.temperature);
    Vec te = softmax_with_temperature(p_t.d, cfg.temperature);
    return kl_divergence(st, te);
}

double total_loss(const Mat& y, const Mat& y_hat, double ckd_value, const LossConfig& cfg) {
    check_loss_cfg(cfg);
    if (!y.same_shape(y_hat)) throw std::runtime_error("total_loss: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < y.d.size(); ++i) {
        const double d = y_hat.d[i] - y.d[i];
        mse += d * d;
    }
    mse /= static_cast<double>(y.d.size());
    return cfg.alpha * mse + cfg.beta * ckd_value;
}

CkdBackward ckd_loss_backward(const Vec& x_a, const PatchstParams& teacher, const Mat& p_t,
                              const LossConfig& cfg) {
    check_loss_cfg(cfg);
    const int D = teacher.cfg.dim, N = teacher.cfg.n_patches(), L = teacher.cfg.horizon;
    Mat tokens;
    Mat p_hat = bridge_forward(x_a, teacher, cfg.adapter, &tokens);
    if (!p_hat.same_shape(p_t))
        throw std::runtime_error("ckd_loss_backward: teacher prediction shape mismatch");
    const int M = p_hat.rows;

    Vec st = softmax_with_temperature(p_hat.d, cfg.temperature);
    Vec te = softmax_with_temperature(p_t.d, cfg.temperature);

    CkdBackward out;
    out.loss = kl_divergence(st, te);

    // d KL / d logits of the student side
    Vec dz(st.size());
    for (size_t i = 0; i < st.size(); ++i)
        dz[i] = st[i] * (std::log(st[i] / te[i]) - out.loss) / cfg.temperature;

    out.d_x_a.assign(x_a.size(), 0.0);
    out.d_adapter_w.resize(cfg.adapter.w.rows, cfg.adapter.w.cols);
    out.d_adapter_b.assign(cfg.adapter.b.size(), 0.0);

    for (int m = 0; m < M; ++m) {
        // back through the frozen head into the channel token
        Vec dtok(static_cast<size_t>(D), 0.0);
        for (int l = 0; l < L; ++l) {
            const double g = dz[static_cast<size_t>(m * L + l)];
            if (g == 0.0) continue;
            const double* wrow = teacher.head_w.row(l);
            for (int d = 0; d < D; ++d) {
                double wsum = 0.0;
                for (int n = 0; n < N; ++n) wsum += wrow[d * N + n];
                dtok[static_cast<size_t>(d)] += g * wsum;
            }
        }
        // back through the adapter
        for (int d = 0; d < D; ++d) {
            const double g = dtok[static_cast<size_t>(d)];
            if (g == 0.0) continue;
            const int row = m * D + d;
            out.d_adapter_b[static_cast<size_t>(row)] += g;
            double* gw = out.d_adapter_w.row(row);
            const double* aw = cfg.adapter.w.row(row);
            for (size_t k = 0; k < x_a.size(); ++k) {
                gw[k] += g * x_a[k];
                out.d_x_a[k] += g * aw[k];
            }
        }
    }
    return out;
}

void Adam::step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
    if (params.size() != grads.size())
        throw std::runtime_error("adam: param/grad tensor count mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].count, 0.0);
            v_[i].assign(params[i].count, 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].count != grads[i].count)
            throw std::runtime_error("adam: tensor size mismatch at " + params[i].name);
        double* p = params[i].data;
        const double* g = grads[i].data;
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (size_t k = 0; k < params[i].count; ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write history: " + path.string());
    out << "epoch,train_loss,val_mae,val_mape\n";
    char buf[160];
    for (const auto& e : h.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_mae, e.val_mape);
        out << buf;
    }
}

namespace {

struct ErrAccum {
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double ape_sum = 0.0;
    long n = 0;
    long ape_n = 0;
    long skipped = 0;

    void add(const Mat& y, const Mat& y_hat) {
        for (size_t i = 0; i < y.d.size(); ++i) {
            const double e = y_hat.d[i] - y.d[i];
            abs_sum += std::abs(e);
            sq_sum += e * e;
            ++n;
            if (y.d[i] == 0.0) {
                ++skipped;
            } else {
                ape_sum += std::abs(e / y.d[i]);
                ++ape_n;
            }
        }
    }

    EvalStats stats() const {
        EvalStats s;
        if (n > 0) {
            s.mae = abs_sum / static_cast<double>(n);
            s.rmse = std::sqrt(sq_sum / static_cast<double>(n));
        }
        s.mape_skipped = skipped;
        if (ape_n > 0)
            s.mape = ape_sum / static_cast<double>(ape_n);
        else
            s.mape_undefined = true;
        return s;
    }
};

[[noreturn]] void diverged(const char* what, int epoch) {
    throw std::runtime_error(std::string(what) + ": loss is not finite at epoch " +
                             std::to_string(epoch) + ", try a lower learning rate");
}

} // namespace

EvalStats evaluate_teacher(const PatchstParams& p, const std::vector<WindowSample>& samples) {
    ErrAccum acc;
    PatchstCache cache;
    for (const auto& s : samples) {
        Mat y_hat = patchst_forward(s.x, p, &cache);
        acc.add(s.y, y_hat);
    }
    return acc.stats();
}

EvalStats evaluate_student(const StcamParams& p, const std::vector<WindowSample>& samples) {
    ErrAccum acc;
    StcamCache cache;
    for (const auto& s : samples) {
        auto out = stcam_forward(s.x, p, false, nullptr, &cache);
        acc.add(s.y, out.y_hat);
    }
    return acc.stats();
}

TeacherTrainResult train_teacher(const std::vector<WindowSample>& train,
                                 const std::vector<WindowSample>& val, const PatchstConfig& mc,
                                 const TrainConfig& tc) {
    if (train.empty()) throw std::runtime_error("train_teacher: empty training set");
    if (val.empty()) throw std::runtime_error("train_teacher: empty validation set");

    PatchstParams params = PatchstParams::init(mc, tc.seed);
    PatchstParams grads = PatchstParams::zeros(mc);
    PatchstParams best = params;
    Adam opt(tc.lr);
    std::mt19937_64 shuffle_rng(tc.seed ^ 0x53485546ull);

    const double out_n = static_cast<double>(train.front().y.d.size());
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    PatchstCache cache;
    Mat dy(train.front().y.rows, train.front().y.cols);

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        long seen = 0;
        int batches_done = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(tc.batch_size)) {
            if (tc.max_batches_per_epoch > 0 && batches_done >= tc.max_batches_per_epoch) break;
            const size_t stop = std::min(order.size(), at + static_cast<size_t>(tc.batch_size));
            const double bsz = static_cast<double>(stop - at);
            grads.zero_all();
            for (size_t i = at; i < stop; ++i) {
                const auto& s = train[order[i]];
                Mat y_hat = patchst_forward(s.x, params, &cache);
                double loss = 0.0;
                for (size_t k = 0; k < y_hat.d.size(); ++k) {
                    const double e = y_hat.d[k] - s.y.d[k];
                    loss += std::abs(e);
                    dy.d[k] = (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / (out_n * bsz);
                }
                epoch_loss += loss / out_n;
                ++seen;
                patchst_backward(dy, cache, params, grads);
            }
            opt.step(params.tensors(), grads.tensors());
            ++batches_done;
        }
        epoch_loss /= static_cast<double>(std::max<long>(1, seen));
        if (!std::isfinite(epoch_loss)) diverged("train_teacher", epoch);

        EvalStats ev = evaluate_teacher(params, val);
        hist.epochs.push_back({epoch, epoch_loss, ev.mae, ev.mape});

        if (ev.mae < best_val) {
            best_val = ev.mae;
            best = params;
            hist.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        if (tc.verbose)
            std::fprintf(stderr, "[teacher] epoch %d train %.5f val %.5f\n", epoch, epoch_loss,
                         ev.mae);
        if (epoch >= tc.min_epochs && bad_epochs > tc.patience) break;
    }
    hist.best_val_mae = best_val;
    return {std::move(best), std::move(hist)};
}

StudentTrainResult train_student_ckd(const std::vector<WindowSample>& train,
                                     const std::vector<WindowSample>& val, const StcamConfig& mc,
                                     const PatchstParams* teacher, double alpha, double beta,
                                     double temperature, const TrainConfig& tc) {
    if (train.empty()) throw std::runtime_error("train_student: empty training set");
    if (val.empty()) throw std::runtime_error("train_student: empty validation set");
    const bool use_ckd = teacher != nullptr && beta != 0.0;
    if (use_ckd) {
        if (teacher->cfg.window != mc.window || teacher->cfg.horizon != mc.horizon)
            throw std::runtime_error("train_student: teacher window/horizon mismatch");
    }

    LossConfig loss_cfg;
    loss_cfg.alpha = alpha;
    loss_cfg.beta = beta;
    loss_cfg.temperature = temperature;

    StcamParams params = StcamParams::init(mc, tc.seed);
    StcamParams grads = StcamParams::zeros(mc);
    AdapterParams adapter_grads;
    if (use_ckd) {
        loss_cfg.adapter =
            AdapterParams::init(mc.signals, teacher->cfg.dim, 2 * mc.hidden, tc.seed);
        adapter_grads = AdapterParams::zeros(mc.signals, teacher->cfg.dim, 2 * mc.hidden);
    }

    // teacher predictions are constant while the student learns, compute once
    std::vector<Mat> p_t;
    if (use_ckd) {
        p_t.reserve(train.size());
        PatchstCache tcache;
        for (const auto& s : train) p_t.push_back(patchst_forward(s.x, *teacher, &tcache));
    }

    Adam opt(tc.lr);
    std::mt19937_64 shuffle_rng(tc.seed ^ 0x53485546ull);
    std::mt19937_64 dropout_rng(tc.seed ^ 0x44524F50ull);

    auto collect = [&](StcamParams& sp, AdapterParams& ap) {
        auto ts = sp.tensors();
        if (use_ckd)
            for (auto& t : ap.tensors()) ts.push_back(t);
        return ts;
    };

    const double out_n = static_cast<double>(train.front().y.d.size());
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainHistory hist;
    StcamParams best = params;
    AdapterParams best_adapter = loss_cfg.adapter;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    StcamCache cache;
    Mat dy(train.front().y.rows, train.front().y.cols);
    Vec no_dx_a;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        long seen = 0;
        int batches_done = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(tc.batch_size)) {
            if (tc.max_batches_per_epoch > 0 && batches_done >= tc.max_batches_per_epoch) break;
            const size_t stop = std::min(order.size(), at + static_cast<size_t>(tc.batch_size));
            const double bsz = static_cast<double>(stop - at);
            grads.zero_all();
            if (use_ckd) {
                adapter_grads.w.zero();
                std::fill(adapter_grads.b.begin(), adapter_grads.b.end(), 0.0);
            }
            for (size_t i = at; i < stop; ++i) {
                const auto& s = train[order[i]];
                auto out = stcam_forward(s.x, params, true, &dropout_rng, &cache);

                double mse = 0.0;
                for (size_t k = 0; k < out.y_hat.d.size(); ++k) {
                    const double e = out.y_hat.d[k] - s.y.d[k];
                    mse += e * e;
                    dy.d[k] = alpha * 2.0 * e / (out_n * bsz);
                }
                mse /= out_n;

                double sample_loss = alpha * mse;
                if (use_ckd) {
                    CkdBackward ckd =
                        ckd_loss_backward(out.x_a, *teacher, p_t[order[i]], loss_cfg);
                    sample_loss += beta * ckd.loss;
                    const double scale = beta / bsz;
                    for (auto& v : ckd.d_x_a) v *= scale;
                    for (size_t k = 0; k < ckd.d_adapter_w.d.size(); ++k)
                        adapter_grads.w.d[k] += scale * ckd.d_adapter_w.d[k];
                    for (size_t k = 0; k < ckd.d_adapter_b.size(); ++k)
                        adapter_grads.b[k] += scale * ckd.d_adapter_b[k];
                    stcam_backward(dy, ckd.d_x_a, cache, params, grads);
                } else {
                    stcam_backward(dy, no_dx_a, cache, params, grads);
                }
                epoch_loss += sample_loss;
                ++seen;
            }
            opt.step(collect(params, loss_cfg.adapter), collect(grads, adapter_grads));
            ++batches_done;
        }
        epoch_loss /= static_cast<double>(std::max<long>(1, seen));
        if (!std::isfinite(epoch_loss)) diverged("train_student", epoch);

        EvalStats ev = evaluate_student(params, val);
        hist.epochs.push_back({epoch, epoch_loss, ev.mae, ev.mape});

        if (ev.mae < best_val) {
            best_val = ev.mae;
            best = params;
            best_adapter = loss_cfg.adapter;
            hist.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        if (tc.verbose)
            std::fprintf(stderr, "[student] epoch %d train %.5f val %.5f\n", epoch, epoch_loss,
                         ev.mae);
        if (epoch >= tc.min_epochs && bad_epochs > tc.patience) break;
    }
    hist.best_val_mae = best_val;
    return {std::move(best), std::move(best_adapter), std::move(hist)};
}

GridResult grid_search(const Mat& raw_series, int horizon, const GridSpace& space,
                       TrainConfig base, int budget_epochs, bool with_ckd,
                       const PatchstConfig& teacher_base) {
    if (space.windows.empty() || space.filters.empty() || space.hiddens.empty() ||
        space.batches.empty())
        throw std::runtime_error("grid_search: empty axis");

    GridResult result;
    result.best.val_mae = std::numeric_limits<double>::infinity();

    for (int T : space.windows) {
        DatasetBundle ds = build_dataset(raw_series, 0, T, horizon);

        PatchstParams teacher;
        if (with_ckd) {
            PatchstConfig tcfg = teacher_base;
            tcfg.window = T;
            tcfg.horizon = horizon;
            TrainConfig ttc = base;
            ttc.max_epochs = budget_epochs;
            ttc.patience = budget_epochs;
            teacher = train_teacher(ds.train, ds.val, tcfg, ttc).params;
        }

        for (int f : space.filters)
            for (int h : space.hiddens)
                for (int b : space.batches) {
                    StcamConfig mc;
                    mc.signals = raw_series.rows;
                    mc.window = T;
                    mc.horizon = horizon;
                    mc.filters = f;
                    mc.hidden = h;
                    TrainConfig tc = base;
                    tc.batch_size = b;
                    tc.max_epochs = budget_epochs;
                    tc.patience = budget_epochs;
                    auto r = train_student_ckd(ds.train, ds.val, mc,
                                               with_ckd ? &teacher : nullptr, 1.0,
                                               with_ckd ? 1.0 : 0.0, 1.0, tc);
                    GridCell cell{T, f, h, b, r.history.best_val_mae};
                    result.cells.push_back(cell);
                    if (cell.val_mae < result.best.val_mae) result.best = cell;
                }
    }
    return result;
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write grid table: " + path.string());
    out << "window,filters,hidden,batch,val_mae\n";
    char buf[128];
    for (const auto& c : r.cells) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.17g\n", c.window, c.filters, c.hidden,
                      c.batch, c.val_mae);
        out << buf;
    }
}

} // namespace canids
