#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "canids/mat.hpp"

namespace canids {

// Per-signal scaling ranges, always taken from training data only.
struct NormStats {
    Vec min;
    Vec max;
};

// One supervised sample: x holds T past steps per signal, y the next L steps.
// t_index is the series column of the last input step. anomalous is filled in
// by the attack labeller for injected streams.
struct WindowSample {
    Mat x; // M x T
    Mat y; // M x L
    long t_index = 0;
    bool anomalous = false;
};

// (x - min) / (max - min), clipped to [0, 1]. A constant signal maps to 0.
double normalize_value(double x, double mn, double mx);

// Stats over columns [col_begin, col_end) of a raw M x N series.
NormStats compute_norm_stats(const Mat& series, long col_begin, long col_end);

Mat normalize_series(const Mat& series, const NormStats& stats);

// Slide a T-past / L-ahead window over the series. Returns
// floor((N - T - L) / stride) + 1 samples; empty when N < T + L (callers
// should warn). Requires T >= 1, L >= 1, stride >= 1.
std::vector<WindowSample> make_windows(const Mat& series, int T, int L, int stride = 1);

// First floor(train_frac * n) samples for training, the rest for test.
// Throws if the training side would be empty.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>>
chronological_split(const std::vector<WindowSample>& samples, double train_frac = 0.8);

// Full dataset for one id: normalized train/val/test windows plus the stats
// that scaled them. val is carved chronologically off the back of train.
struct DatasetBundle {
    uint16_t can_id = 0;
    int T = 0;
    int L = 0;
    int stride = 1;
    NormStats stats;
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
    std::vector<WindowSample> test;
    Mat normalized; // whole normalized series, kept for injection experiments
    long test_col_begin = 0; // first series column that only test windows touch
};

// Normalization stats come from the columns covered by training windows, so
// nothing from the test region leaks into scaling.
DatasetBundle build_dataset(const Mat& raw_series, uint16_t can_id, int T, int L,
                            double train_frac = 0.8, double val_frac = 0.1, int stride = 1);

} // namespace canids
