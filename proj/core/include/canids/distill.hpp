#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "canids/dataset.hpp"
#include "canids/mat.hpp"
#include "canids/patchst.hpp"
#include "canids/stcam.hpp"

namespace canids {

// Linear bridge from the student's attention summary (width 2h) to one
// D-wide token per signal channel. The token is repeated across the
// teacher's patch slots and pushed through the teacher's frozen output head
// to obtain student predictions in the teacher's coordinate system.
struct AdapterParams {
    Mat w; // (signals * dim) x (2 * hidden)
    Vec b; // signals * dim

    static AdapterParams init(int signals, int dim, int hidden2, uint64_t seed);
    static AdapterParams zeros(int signals, int dim, int hidden2);
    std::vector<TensorRef> tensors();
    size_t param_count() const;
};

struct LossConfig {
    double alpha = 1.0;       // weight of the forecast error term
    double beta = 1.0;        // weight of the distillation term
    double temperature = 1.0; // softens both distributions before the KL
    AdapterParams adapter;
};

Vec softmax_with_temperature(std::span<const double> logits, double temperature);

// KL(p || q) with p, q probability vectors of equal length.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Distillation term: map x_a through the adapter and the teacher's frozen
// head, soften both prediction vectors, return KL(student || teacher).
double ckd_loss(const Vec& x_a, const PatchstParams& teacher, const Mat& p_t,
                const LossConfig& cfg);

// alpha * mse(y, y_hat) + beta * ckd_value
double total_loss(const Mat& y, const Mat& y_hat, double ckd_value, const LossConfig& cfg);

// Gradients of ckd_loss wrt the adapter and x_a. The teacher head only routes
// gradients, its own tensors are never touched.
struct CkdBackward {
    double loss = 0.0;
    Vec d_x_a;
    Mat d_adapter_w;
    Vec d_adapter_b;
};
CkdBackward ckd_loss_backward(const Vec& x_a, const PatchstParams& teacher, const Mat& p_t,
                              const LossConfig& cfg);

// Plain Adam over the tensor views handed out by a parameter struct.
class Adam {
  public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Vec> m_, v_;
};

struct TrainConfig {
    double lr = 1e-2;
    int max_epochs = 3000;
    int patience = 20;   // epochs without val improvement before stopping
    int min_epochs = 0;
    int batch_size = 256;
    int max_batches_per_epoch = 0; // 0 = full pass
    uint64_t seed = 0;
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_mape = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_mae = 0.0;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h);

struct EvalStats {
    double mae = 0.0;
    double mape = 0.0;
    double rmse = 0.0;
    long mape_skipped = 0;
    bool mape_undefined = false;
};

EvalStats evaluate_teacher(const PatchstParams& p, const std::vector<WindowSample>& samples);
EvalStats evaluate_student(const StcamParams& p, const std::vector<WindowSample>& samples);

struct TeacherTrainResult {
    PatchstParams params;
    TrainHistory history;
};

// Mean-absolute-error training with Adam and early stopping on validation
// MAE. Fully deterministic for a fixed seed.
TeacherTrainResult train_teacher(const std::vector<WindowSample>& train,
                                 const std::vector<WindowSample>& val, const PatchstConfig& mc,
                                 const TrainConfig& tc);

struct StudentTrainResult {
    StcamParams params;
    AdapterParams adapter;
    TrainHistory history;
};

// Student training with the combined loss. teacher == nullptr or beta == 0
// reduces to plain forecast training with identical arithmetic, so the same
// seed gives bit-identical results either way.
StudentTrainResult train_student_ckd(const std::vector<WindowSample>& train,
                                     const std::vector<WindowSample>& val, const StcamConfig& mc,
                                     const PatchstParams* teacher, double alpha, double beta,
                                     double temperature, const TrainConfig& tc);

struct GridSpace {
    std::vector<int> windows{8, 16, 32, 64};
    std::vector<int> filters{8, 16, 32, 64};
    std::vector<int> hiddens{4, 8, 16, 32};
    std::vector<int> batches{128, 256, 512, 1024};
    size_t size() const {
        return windows.size() * filters.size() * hiddens.size() * batches.size();
    }
};

struct GridCell {
    int window = 0, filters = 0, hidden = 0, batch = 0;
    double val_mae = 0.0;
};

struct GridResult {
    std::vector<GridCell> cells;
    GridCell best;
};

// Trains one student per cell for budget_epochs and reports validation MAE.
// with_ckd additionally trains one teacher per distinct window size and
// distills from it.
GridResult grid_search(const Mat& raw_series, int horizon, const GridSpace& space,
                       TrainConfig base, int budget_epochs, bool with_ckd = false,
                       const PatchstConfig& teacher_base = {});

void write_grid_csv(const std::filesystem::path& path, const GridResult& r);

} // namespace canids
