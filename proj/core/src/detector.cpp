#include "canids/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace canids {

double anomaly_score(const double* y, const double* y_hat, int count) {
    if (count < 1) throw std::runtime_error("anomaly_score: empty window");
    double acc = 0.0;
    for (int i = 0; i < count; ++i) acc += std::fabs(y[i] - y_hat[i]);
    return acc / count;
}

double score_quantile(const std::vector<double>& scores, double q) {
    if (scores.empty()) throw std::runtime_error("score_quantile: no scores");
    if (q < 0.0 || q > 1.0) throw std::runtime_error("score_quantile: q outside [0, 1]");
    std::vector<double> s(scores);
    std::sort(s.begin(), s.end());
    const double pos = q * static_cast<double>(s.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    if (lo == hi) return s[lo];
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

double calibrate_threshold(const std::vector<double>& clean_scores,
                           const ThresholdConfig& cfg) {
    if (!cfg.use_quantile) return cfg.fixed;
    return score_quantile(clean_scores, cfg.quantile);
}

std::vector<uint8_t> classify(const std::vector<double>& scores, double tau) {
    std::vector<uint8_t> out(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > tau ? 1 : 0;
    return out;
}

DetectionReport compute_metrics(const std::vector<uint8_t>& truth,
                                const std::vector<uint8_t>& verdicts) {
    if (truth.size() != verdicts.size())
        throw std::runtime_error("compute_metrics: length mismatch");
    if (truth.empty()) throw std::runtime_error("compute_metrics: no windows");

    DetectionReport r;
    for (size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] != 0, v = verdicts[i] != 0;
        if (t && v) ++r.tp;
        else if (!t && v) ++r.fp;
        else if (!t && !v) ++r.tn;
        else ++r.fn;
    }

    if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / (r.tp + r.fp);
    else r.precision_undefined = true;
    if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
    else r.recall_undefined = true;
    if (r.precision + r.recall > 0.0 && !r.precision_undefined && !r.recall_undefined)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    else r.f1_undefined = true;
    r.error_rate = static_cast<double>(r.fp + r.fn) / static_cast<double>(truth.size());
    if (r.fp + r.tn > 0) r.false_alarm_rate = static_cast<double>(r.fp) / (r.fp + r.tn);
    else r.far_undefined = true;
    return r;
}

PredictionStats prediction_stats(const Mat& y, const Mat& y_hat) {
    if (y.rows != y_hat.rows || y.cols != y_hat.cols)
        throw std::runtime_error("prediction_stats: shape mismatch");
    if (y.rows < 1 || y.cols < 1) throw std::runtime_error("prediction_stats: empty");
    PredictionStats st;
    double abs_acc = 0.0, pct_acc = 0.0;
    long pct_n = 0;
    for (size_t i = 0; i < y.d.size(); ++i) {
        const double err = y_hat.d[i] - y.d[i];
        abs_acc += std::fabs(err);
        if (y.d[i] == 0.0) {
            ++st.mape_skipped;
        } else {
            pct_acc += std::fabs(err / y.d[i]);
            ++pct_n;
        }
    }
    st.mae = abs_acc / static_cast<double>(y.d.size());
    if (pct_n > 0) st.mape = 100.0 * pct_acc / static_cast<double>(pct_n);
    else st.mape_undefined = true;
    return st;
}

std::vector<double> window_scores(const Mat& y, const Mat& y_hat) {
    if (y.rows != y_hat.rows || y.cols != y_hat.cols)
        throw std::runtime_error("window_scores: shape mismatch");
    std::vector<double> out(static_cast<size_t>(y.rows));
    for (int k = 0; k < y.rows; ++k)
        out[static_cast<size_t>(k)] = anomaly_score(y.row(k), y_hat.row(k), y.cols);
    return out;
}

void write_window_trace_csv(const std::string& path, const std::vector<double>& scores,
                            const std::vector<uint8_t>& verdicts,
                            const std::vector<uint8_t>& truth) {
    if (scores.size() != verdicts.size() || scores.size() != truth.size())
        throw std::runtime_error("write_window_trace_csv: length mismatch");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::fputs("window,score,verdict,truth\n", f);
    for (size_t k = 0; k < scores.size(); ++k)
        std::fprintf(f, "%zu,%.17g,%d,%d\n", k, scores[k], verdicts[k] ? 1 : 0,
                     truth[k] ? 1 : 0);
    std::fclose(f);
}

} // namespace canids
