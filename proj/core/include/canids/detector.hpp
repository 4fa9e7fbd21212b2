#pragma once

// Threshold detector on top of the forecaster: a window is flagged when the
// mean absolute gap between predicted and observed next steps exceeds tau.

#include <string>
#include <vector>

#include "canids/mat.hpp"

namespace canids {

// mean |y - y_hat| over all forecast entries of one window
double anomaly_score(const double* y, const double* y_hat, int count);

struct ThresholdConfig {
    bool use_quantile = true;
    double quantile = 0.995; // of clean validation scores
    double fixed = 0.04;     // used when use_quantile is false
};

// linear-interpolation quantile over a copy of the scores
double score_quantile(const std::vector<double>& scores, double q);

double calibrate_threshold(const std::vector<double>& clean_scores,
                           const ThresholdConfig& cfg);

// verdict per window: score strictly above tau
std::vector<uint8_t> classify(const std::vector<double>& scores, double tau);

struct DetectionReport {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double error_rate = 0.0;      // (fp + fn) / total
    double false_alarm_rate = 0.0; // fp / (fp + tn)
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
    bool far_undefined = false;
};

DetectionReport compute_metrics(const std::vector<uint8_t>& truth,
                                const std::vector<uint8_t>& verdicts);

struct PredictionStats {
    double mae = 0.0;
    double mape = 0.0; // percent, entries with y == 0 skipped
    long mape_skipped = 0;
    bool mape_undefined = false;
};

// y and y_hat are n_windows x (signals * horizon)
PredictionStats prediction_stats(const Mat& y, const Mat& y_hat);

std::vector<double> window_scores(const Mat& y, const Mat& y_hat);

// columns: window, score, verdict, truth
void write_window_trace_csv(const std::string& path, const std::vector<double>& scores,
                            const std::vector<uint8_t>& verdicts,
                            const std::vector<uint8_t>& truth);

} // namespace canids
