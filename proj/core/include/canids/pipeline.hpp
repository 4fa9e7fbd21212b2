#pragma once

// End-to-end orchestration: each stage reads the artifacts of its
// predecessors from a working directory and leaves its own behind, so any
// stage can be rerun or inspected in isolation. All floating point output
// uses round-trip precision and every random draw is derived from the
// config seed, which makes reruns byte-identical.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "canids/attack_sim.hpp"
#include "canids/dataset.hpp"
#include "canids/detector.hpp"
#include "canids/distill.hpp"
#include "canids/patchst.hpp"
#include "canids/signal_extract.hpp"
#include "canids/stcam.hpp"

namespace canids {

struct PipelineConfig {
    std::string workdir = "workdir";
    uint64_t seed = 1;

    // ingest: with no trace_path a synthetic trace is generated
    std::string trace_path;
    double synth_duration = 35.0;

    BoundaryOptions boundary;
    SelectionOptions selection;

    int window = 16;
    int horizon = 1;
    int stride = 1;
    double train_frac = 0.7;
    double val_frac = 0.15;

    int filters = 4;
    int hidden = 8;
    double dropout = 0.2;

    // window/horizon of the teacher follow the dataset settings
    PatchstConfig teacher;

    TrainConfig train;
    double alpha = 1.0;
    double beta = 1.0;
    double temperature = 1.0;
    bool use_ckd = true;

    ThresholdConfig threshold;

    // indices are relative to the held-out test segment of each id
    std::vector<AttackScenario> attacks;
};

PipelineConfig default_config();
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

// Throws with a message naming the offending field.
void validate_config(const PipelineConfig& cfg);

// cfg.workdir unless the CANIDS_WORKDIR environment variable is set.
std::filesystem::path resolve_workdir(const PipelineConfig& cfg);

// ---- archive round trips ----

void save_dataset_bundle(const std::filesystem::path& path, const DatasetBundle& ds);
DatasetBundle load_dataset_bundle(const std::filesystem::path& path);

void save_teacher(const std::filesystem::path& path, const PatchstParams& p,
                  const TrainHistory* history = nullptr);
PatchstParams load_teacher(const std::filesystem::path& path);

void save_student(const std::filesystem::path& path, const StcamParams& p,
                  const AdapterParams* adapter = nullptr,
                  const TrainHistory* history = nullptr);
StcamParams load_student(const std::filesystem::path& path,
                         AdapterParams* adapter = nullptr);

// Best validation MAE recorded in a model archive, NaN when absent.
double archive_best_val_mae(const std::filesystem::path& path);

// ---- stages ----

void stage_ingest(const PipelineConfig& cfg);        // frames.csv
void stage_extract(const PipelineConfig& cfg);       // layouts.txt, selected_ids.txt
void stage_dataset(const PipelineConfig& cfg);       // dataset_<id>.ntar
void stage_train_teacher(const PipelineConfig& cfg); // teacher_<id>.ntar, history csv
void stage_train_student(const PipelineConfig& cfg); // student_<id>.ntar, history csv
void stage_calibrate(const PipelineConfig& cfg);     // thresholds.csv
void stage_inject(const PipelineConfig& cfg);        // injected_<id>_<k>.ntar, scenarios.txt
void stage_detect(const PipelineConfig& cfg);        // detect_<id>_<k>.csv, attack_metrics.csv
void stage_report(const PipelineConfig& cfg);        // summary.csv, prediction_stats.csv

void run_pipeline(const PipelineConfig& cfg);

std::vector<uint16_t> read_selected_ids(const std::filesystem::path& workdir);

// Content hash of every artifact in the workdir, rewritten after each stage.
void update_manifest(const std::filesystem::path& workdir);

// Lowercase hex id without prefix, e.g. 0x260 -> "260".
std::string id_token(uint16_t can_id);

} // namespace canids
