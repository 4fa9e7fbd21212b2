#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "canids/mat.hpp"

namespace canids {

// Lightweight per-id forecaster: temporal convolution over the signal
// channels, a bidirectional LSTM whose two directions share one weight set,
// soft attention pooling over all time steps, dropout, and a dense head that
// emits L future steps per signal.
struct StcamConfig {
    int signals = 4;  // M
    int window = 16;  // T
    int horizon = 1;  // L
    int filters = 16; // conv output channels
    int hidden = 8;   // LSTM state size per direction
    double dropout = 0.2;
};

struct StcamParams {
    StcamConfig cfg;

    Mat conv_w; // filters x (signals * 3), kernel 3, stride 1, zero padded
    Vec conv_b; // filters

    // one gate set reused by both directions
    Mat w_f, w_i, w_o, w_c; // hidden x (hidden + filters)
    Vec b_f, b_i, b_o, b_c; // hidden

    Vec attn_v; // 2 * hidden, learned scoring vector

    Mat head_w; // (signals * horizon) x (2 * hidden)
    Vec head_b; // signals * horizon

    static StcamParams init(const StcamConfig& cfg, uint64_t seed);
    static StcamParams zeros(const StcamConfig& cfg);

    std::vector<TensorRef> tensors();
    size_t param_count() const;
    void zero_all();
};

// Everything the backward pass needs, reusable across samples to avoid
// re-allocating in training loops.
struct StcamCache {
    Mat x;        // M x T input
    Mat conv_pre; // filters x T
    Mat conv_out; // filters x T (relu)

    // per direction (0 forward in time, 1 backward)
    Mat z[2];      // T x (hidden + filters), [h_prev; u_t]
    Mat gate_f[2], gate_i[2], gate_o[2], gate_g[2]; // T x hidden, post activation
    Mat cell[2];   // T x hidden
    Mat tanh_c[2]; // T x hidden

    Mat hseq;  // T x 2*hidden
    Vec alpha; // T attention weights
    Vec h_star; // 2*hidden pooled summary (pre dropout)
    Vec drop_mask; // 2*hidden, 0 or 1/(1-p)
    Vec head_in;   // 2*hidden, h_star after dropout
    Mat y_hat;     // M x L
};

struct StcamOutput {
    Mat y_hat; // M x L
    Vec x_a;   // attention summary handed to the distillation bridge
};

// Standalone pieces, also used by the full forward.
Mat conv1d_relu(const Mat& x, const Mat& w, const Vec& b);
Mat bilstm(const Mat& features, const StcamParams& p); // T x 2*hidden
std::pair<Vec, Vec> attention_pool(const Mat& hseq, const Vec& v); // (pooled, weights)

// Full forward. rng is only consumed when training is true (dropout mask).
StcamOutput stcam_forward(const Mat& x, const StcamParams& p, bool training = false,
                          std::mt19937_64* rng = nullptr, StcamCache* cache = nullptr);

// Accumulates parameter gradients into grads. dy is dLoss/dy_hat (M x L);
// dx_a, when non-empty, is an extra gradient entering at the attention
// summary (the distillation path).
void stcam_backward(const Mat& dy, const Vec& dx_a, const StcamCache& cache,
                    const StcamParams& p, StcamParams& grads);

} // namespace canids
