#include "canids/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canids {

double normalize_value(double x, double mn, double mx) {
    if (mx == mn) return 0.0;
    double v = (x - mn) / (mx - mn);
    return std::max(0.0, std::min(1.0, v));
}

NormStats compute_norm_stats(const Mat& series, long col_begin, long col_end) {
    if (col_begin < 0 || col_end > series.cols || col_begin >= col_end)
        throw std::runtime_error("compute_norm_stats: empty or out-of-range column span");
    NormStats st;
    st.min.assign(static_cast<size_t>(series.rows), 0.0);
    st.max.assign(static_cast<size_t>(series.rows), 0.0);
    for (int m = 0; m < series.rows; ++m) {
        double mn = series(m, static_cast<int>(col_begin));
        double mx = mn;
        for (long n = col_begin + 1; n < col_end; ++n) {
            mn = std::min(mn, series(m, static_cast<int>(n)));
            mx = std::max(mx, series(m, static_cast<int>(n)));
        }
        st.min[static_cast<size_t>(m)] = mn;
        st.max[static_cast<size_t>(m)] = mx;
    }
    return st;
}

Mat normalize_series(const Mat& series, const NormStats& stats) {
    if (stats.min.size() != static_cast<size_t>(series.rows))
        throw std::runtime_error("normalize_series: stats do not match signal count");
    Mat out(series.rows, series.cols);
    for (int m = 0; m < series.rows; ++m)
        for (int n = 0; n < series.cols; ++n)
            out(m, n) = normalize_value(series(m, n), stats.min[static_cast<size_t>(m)],
                                        stats.max[static_cast<size_t>(m)]);
    return out;
}

std::vector<WindowSample> make_windows(const Mat& series, int T, int L, int stride) {
    if (T < 1 || L < 1 || stride < 1)
        throw std::runtime_error("make_windows: T, L and stride must be >= 1");
    std::vector<WindowSample> out;
    if (series.cols < T + L) return out; // too short, caller warns
    for (long k = 0; k + T + L <= series.cols; k += stride) {
        WindowSample s;
        s.x.resize(series.rows, T);
        s.y.resize(series.rows, L);
        for (int m = 0; m < series.rows; ++m) {
            for (int t = 0; t < T; ++t) s.x(m, t) = series(m, static_cast<int>(k) + t);
            for (int l = 0; l < L; ++l) s.y(m, l) = series(m, static_cast<int>(k) + T + l);
        }
        s.t_index = k + T - 1;
        out.push_back(std::move(s));
    }
    return out;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>>
chronological_split(const std::vector<WindowSample>& samples, double train_frac) {
    if (train_frac <= 0.0 || train_frac > 1.0)
        throw std::runtime_error("chronological_split: train_frac must be in (0, 1]");
    auto n_train = static_cast<size_t>(std::floor(train_frac * static_cast<double>(samples.size())));
    if (n_train == 0)
        throw std::runtime_error("chronological_split: empty training split");
    std::vector<WindowSample> train(samples.begin(), samples.begin() + static_cast<long>(n_train));
    std::vector<WindowSample> test(samples.begin() + static_cast<long>(n_train), samples.end());
    return {std::move(train), std::move(test)};
}

DatasetBundle build_dataset(const Mat& raw_series, uint16_t can_id, int T, int L,
                            double train_frac, double val_frac, int stride) {
    if (raw_series.cols < T + L)
        throw std::runtime_error("build_dataset: series shorter than one window");

    // decide the split on window counts first, then scale with stats from the
    // columns those training windows actually touch
    long n_windows = (raw_series.cols - T - L) / stride + 1;
    auto n_train = static_cast<long>(std::floor(train_frac * static_cast<double>(n_windows)));
    if (n_train == 0) throw std::runtime_error("build_dataset: empty training split");
    long train_cols = (n_train - 1) * stride + T + L; // last train window ends here

    DatasetBundle ds;
    ds.can_id = can_id;
    ds.T = T;
    ds.L = L;
    ds.stride = stride;
    ds.stats = compute_norm_stats(raw_series, 0, train_cols);
    ds.normalized = normalize_series(raw_series, ds.stats);

    auto samples = make_windows(ds.normalized, T, L, stride);
    auto [train_all, test] = chronological_split(samples, train_frac);
    ds.test = std::move(test);
    ds.test_col_begin = train_cols;

    // validation is the chronological tail of the training block
    auto n_val = static_cast<size_t>(std::floor(val_frac * static_cast<double>(train_all.size())));
    if (n_val >= train_all.size()) n_val = train_all.size() - 1;
    ds.train.assign(train_all.begin(), train_all.end() - static_cast<long>(n_val));
    ds.val.assign(train_all.end() - static_cast<long>(n_val), train_all.end());
    return ds;
}

} // namespace canids
