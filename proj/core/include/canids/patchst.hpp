#pragma once

#include <cstdint>
#include <vector>

#include "canids/mat.hpp"

namespace canids {

// Channel-independent patch transformer: every signal is sliced into
// overlapping patches, embedded, run through a small multi-head attention
// encoder stack and mapped to L future steps by one shared linear head.
// Weights are shared across channels.
struct PatchstConfig {
    int window = 16;    // T
    int horizon = 1;    // L
    int patch_len = 4;  // P
    int stride = 1;     // S
    int dim = 8;        // D, token width
    int heads = 2;      // H
    int layers = 2;     // encoder depth
    int ff_dim = 16;    // feed-forward width, 2*D by default
    // The residual normalization applies a relu after scaling. Set false for
    // the conventional linear layer norm.
    bool relu_layer_norm = true;
    double ln_eps = 1e-10;

    int n_patches() const { return (window - patch_len) / stride + 2; }
    int head_dim() const { return dim / heads; }
};

struct EncoderLayerParams {
    std::vector<Mat> w_q, w_k; // per head, dim x head_dim
    std::vector<Mat> w_v;      // per head, dim x dim
    Mat w_mix;                 // dim x (heads * dim)
    Vec ln1_g, ln1_b;          // dim
    Mat w_ff1;                 // ff_dim x dim
    Vec b_ff1;                 // ff_dim
    Mat w_ff2;                 // dim x ff_dim
    Vec b_ff2;                 // dim
    Vec ln2_g, ln2_b;          // dim
};

struct PatchstParams {
    PatchstConfig cfg;
    Mat w_embed, w_pos; // dim x patch_len
    Vec b_embed, b_pos; // dim
    std::vector<EncoderLayerParams> enc;
    Mat head_w; // horizon x (dim * n_patches)
    Vec head_b; // horizon

    static PatchstParams init(const PatchstConfig& cfg, uint64_t seed);
    static PatchstParams zeros(const PatchstConfig& cfg);

    std::vector<TensorRef> tensors();
    size_t param_count() const;
    void zero_all();
};

struct PatchstLayerCache {
    Mat x_in; // dim x N tokens entering the layer
    std::vector<Mat> q, k, v, p; // per head: N x head_dim, N x head_dim, N x dim, N x N
    Mat concat;  // (heads * dim) x N
    Mat x_attn;  // dim x N after the mix matrix
    Mat res1;    // x_in + x_attn
    Vec mu1, inv_std1; // per feature
    Mat xhat1, pre1, x_norm; // dim x N
    Mat ff_pre, ff_act;      // ff_dim x N
    Mat x_ff;    // dim x N
    Mat res2;    // x_norm + x_ff
    Vec mu2, inv_std2;
    Mat xhat2, pre2, out; // dim x N
};

struct PatchstChannelCache {
    Mat patches; // patch_len x N
    std::vector<PatchstLayerCache> layers;
    Vec flat;    // dim * N head input
};

struct PatchstCache {
    std::vector<PatchstChannelCache> channels;
    Mat y_hat; // M x L
};

// Slice one series of T values into patches; the tail is padded by repeating
// the last value stride times, which yields exactly (T-P)/S + 2 patches.
Mat patchify(const Vec& series, int patch_len, int stride);

// Token embedding: value projection plus a patch-conditioned positional term,
// both linear in the patch.
Mat embed(const Mat& patches, const PatchstParams& p);

// One encoder block on an arbitrary token matrix (dim x N).
Mat encoder_layer(const Mat& tokens, const EncoderLayerParams& lp, const PatchstConfig& cfg,
                  PatchstLayerCache* cache = nullptr);

Mat patchst_forward(const Mat& x, const PatchstParams& p, PatchstCache* cache = nullptr);

// Accumulates parameter gradients; dy is dLoss/dy_hat (M x L).
void patchst_backward(const Mat& dy, const PatchstCache& cache, const PatchstParams& p,
                      PatchstParams& grads);

} // namespace canids
