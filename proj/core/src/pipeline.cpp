#include "canids/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "canids/frame.hpp"
#include "canids/synthgen.hpp"
#include "canids/tensor_archive.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace canids {

namespace {

void put_tensors(NamedTensorArchive& a, const std::vector<TensorRef>& ts) {
    for (const auto& t : ts)
        a.add(t.name, t.shape, std::span<const double>(t.data, t.count));
}

void get_tensors(const NamedTensorArchive& a, const std::vector<TensorRef>& ts) {
    for (const auto& t : ts) {
        const auto& e = a.at(t.name);
        if (e.values.size() != t.count)
            throw std::runtime_error("archive tensor '" + t.name + "' has unexpected size");
        std::copy(e.values.begin(), e.values.end(), t.data);
    }
}

void add_history(NamedTensorArchive& a, const TrainHistory* h) {
    if (!h || h->best_epoch < 0) return;
    Vec mae{h->best_val_mae};
    Vec ep{static_cast<double>(h->best_epoch)};
    a.add("train.best_val_mae", {1}, mae);
    a.add("train.best_epoch", {1}, ep);
}

std::string flag_string(const DetectionReport& r) {
    std::string s;
    auto append = [&s](const char* f) {
        if (!s.empty()) s += ';';
        s += f;
    };
    if (r.precision_undefined) append("precision_undefined");
    if (r.recall_undefined) append("recall_undefined");
    if (r.f1_undefined) append("f1_undefined");
    if (r.far_undefined) append("far_undefined");
    return s.empty() ? "-" : s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// forecast every sample; rows of y / y_hat are flattened M x L blocks
void forecast_windows(const StcamParams& p, const std::vector<WindowSample>& samples,
                      Mat& y, Mat& y_hat) {
    if (samples.empty()) throw std::runtime_error("forecast_windows: no samples");
    const int out_n = samples[0].y.rows * samples[0].y.cols;
    y.resize(static_cast<int>(samples.size()), out_n);
    y_hat.resize(static_cast<int>(samples.size()), out_n);
    for (size_t k = 0; k < samples.size(); ++k) {
        auto out = stcam_forward(samples[k].x, p);
        std::copy(samples[k].y.d.begin(), samples[k].y.d.end(), y.row(static_cast<int>(k)));
        std::copy(out.y_hat.d.begin(), out.y_hat.d.end(), y_hat.row(static_cast<int>(k)));
    }
}

std::map<std::string, double> read_thresholds(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::map<std::string, double> out;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() < 2) throw std::runtime_error("thresholds.csv: malformed line");
        out[f[0]] = std::stod(f[1]);
    }
    return out;
}

uint64_t hash_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    return fnv1a(bytes.data(), bytes.size());
}

} // namespace

std::string id_token(uint16_t can_id) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%03x", can_id);
    return buf;
}

// ---------------------------------------------------------------- config

PipelineConfig default_config() {
    PipelineConfig cfg;
    cfg.train.max_epochs = 200;
    cfg.train.patience = 12;

    auto add = [&cfg](AttackKind k, long begin, long end) {
        AttackScenario s;
        s.kind = k;
        s.granularity = Granularity::coarse;
        s.begin = begin;
        s.end = end;
        cfg.attacks.push_back(s);
    };
    add(AttackKind::dos, 80, 240);
    add(AttackKind::fuzzy, 280, 440);
    add(AttackKind::suspension, 480, 540);
    add(AttackKind::replay, 580, 660);
    cfg.attacks.back().replay_src = 80;
    add(AttackKind::spoofing, 700, 780);
    add(AttackKind::masquerade, 820, 900);
    return cfg;
}

void validate_config(const PipelineConfig& cfg) {
    auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
    if (cfg.workdir.empty()) fail("workdir must not be empty");
    if (cfg.window <= 10) fail("window must be larger than 10 steps");
    if (cfg.horizon < 1 || cfg.horizon > 5) fail("horizon must be between 1 and 5");
    if (cfg.stride < 1) fail("stride must be >= 1");
    if (cfg.train_frac <= 0.0 || cfg.train_frac > 1.0) fail("train_frac must be in (0, 1]");
    if (cfg.val_frac < 0.0 || cfg.val_frac >= 1.0) fail("val_frac must be in [0, 1)");
    if (cfg.filters < 1) fail("filters must be >= 1");
    if (cfg.hidden < 1) fail("hidden must be >= 1");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) fail("dropout must be in [0, 1)");
    if (cfg.teacher.dim < 1 || cfg.teacher.heads < 1) fail("teacher dim and heads must be >= 1");
    if (cfg.teacher.dim % cfg.teacher.heads != 0) fail("teacher dim must be divisible by heads");
    if (cfg.teacher.patch_len < 1 || cfg.teacher.patch_len > cfg.window)
        fail("teacher patch_len must be in [1, window]");
    if (cfg.teacher.stride < 1) fail("teacher stride must be >= 1");
    if ((cfg.window - cfg.teacher.patch_len) % cfg.teacher.stride != 0)
        fail("teacher stride must evenly divide window - patch_len");
    if (cfg.teacher.layers < 1 || cfg.teacher.ff_dim < 1)
        fail("teacher layers and ff_dim must be >= 1");
    if (cfg.train.lr <= 0.0) fail("learning rate must be positive");
    if (cfg.train.max_epochs < 1) fail("max_epochs must be >= 1");
    if (cfg.train.batch_size < 1) fail("batch_size must be >= 1");
    if (cfg.alpha < 0.0 || cfg.beta < 0.0) fail("alpha and beta must be non-negative");
    if (cfg.temperature <= 0.0) fail("temperature must be positive");
    if (cfg.threshold.use_quantile &&
        (cfg.threshold.quantile < 0.0 || cfg.threshold.quantile > 1.0))
        fail("threshold quantile must be in [0, 1]");
    for (const auto& a : cfg.attacks)
        if (a.begin < 0 || a.end <= a.begin)
            fail("attack interval must satisfy 0 <= begin < end");
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }

    static const char* known[] = {"workdir", "seed",    "trace",   "extract",
                                  "dataset", "student", "teacher", "train",
                                  "distill", "threshold", "attacks"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
                return it.key() == k;
            }) == std::end(known))
            throw std::runtime_error("config: unknown key '" + it.key() + "'");

    PipelineConfig cfg = default_config();
    cfg.workdir = j.value("workdir", cfg.workdir);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("trace")) {
        const auto& t = j["trace"];
        cfg.trace_path = t.value("path", cfg.trace_path);
        cfg.synth_duration = t.value("synth_duration", cfg.synth_duration);
    }
    if (j.contains("extract")) {
        const auto& e = j["extract"];
        cfg.boundary.magnitude_base = e.value("magnitude_base", cfg.boundary.magnitude_base);
        cfg.boundary.min_signal_bits = e.value("min_signal_bits", cfg.boundary.min_signal_bits);
        cfg.selection.min_total_bits = e.value("min_total_bits", cfg.selection.min_total_bits);
        cfg.selection.cv_max = e.value("cv_max", cfg.selection.cv_max);
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        cfg.window = d.value("window", cfg.window);
        cfg.horizon = d.value("horizon", cfg.horizon);
        cfg.stride = d.value("stride", cfg.stride);
        cfg.train_frac = d.value("train_frac", cfg.train_frac);
        cfg.val_frac = d.value("val_frac", cfg.val_frac);
    }
    if (j.contains("student")) {
        const auto& s = j["student"];
        cfg.filters = s.value("filters", cfg.filters);
        cfg.hidden = s.value("hidden", cfg.hidden);
        cfg.dropout = s.value("dropout", cfg.dropout);
    }
    if (j.contains("teacher")) {
        const auto& t = j["teacher"];
        cfg.teacher.patch_len = t.value("patch_len", cfg.teacher.patch_len);
        cfg.teacher.stride = t.value("stride", cfg.teacher.stride);
        cfg.teacher.dim = t.value("dim", cfg.teacher.dim);
        cfg.teacher.heads = t.value("heads", cfg.teacher.heads);
        cfg.teacher.layers = t.value("layers", cfg.teacher.layers);
        cfg.teacher.ff_dim = t.value("ff_dim", cfg.teacher.ff_dim);
        cfg.teacher.relu_layer_norm = t.value("relu_layer_norm", cfg.teacher.relu_layer_norm);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.patience = t.value("patience", cfg.train.patience);
        cfg.train.min_epochs = t.value("min_epochs", cfg.train.min_epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.max_batches_per_epoch =
            t.value("max_batches_per_epoch", cfg.train.max_batches_per_epoch);
        cfg.train.verbose = t.value("verbose", cfg.train.verbose);
    }
    if (j.contains("distill")) {
        const auto& d = j["distill"];
        cfg.alpha = d.value("alpha", cfg.alpha);
        cfg.beta = d.value("beta", cfg.beta);
        cfg.temperature = d.value("temperature", cfg.temperature);
        cfg.use_ckd = d.value("use_ckd", cfg.use_ckd);
    }
    if (j.contains("threshold")) {
        const auto& t = j["threshold"];
        cfg.threshold.use_quantile = t.value("use_quantile", cfg.threshold.use_quantile);
        cfg.threshold.quantile = t.value("quantile", cfg.threshold.quantile);
        cfg.threshold.fixed = t.value("fixed", cfg.threshold.fixed);
    }
    if (j.contains("attacks")) {
        cfg.attacks.clear();
        for (const auto& rec : j["attacks"])
            cfg.attacks.push_back(scenario_from_record(rec.get<std::string>()));
    }
    validate_config(cfg);
    return cfg;
}

void save_config(const PipelineConfig& cfg, const fs::path& path) {
    json j;
    j["workdir"] = cfg.workdir;
    j["seed"] = cfg.seed;
    j["trace"] = {{"path", cfg.trace_path}, {"synth_duration", cfg.synth_duration}};
    j["extract"] = {{"magnitude_base", cfg.boundary.magnitude_base},
                    {"min_signal_bits", cfg.boundary.min_signal_bits},
                    {"min_total_bits", cfg.selection.min_total_bits},
                    {"cv_max", cfg.selection.cv_max}};
    j["dataset"] = {{"window", cfg.window},
                    {"horizon", cfg.horizon},
                    {"stride", cfg.stride},
                    {"train_frac", cfg.train_frac},
                    {"val_frac", cfg.val_frac}};
    j["student"] = {{"filters", cfg.filters}, {"hidden", cfg.hidden}, {"dropout", cfg.dropout}};
    j["teacher"] = {{"patch_len", cfg.teacher.patch_len},
                    {"stride", cfg.teacher.stride},
                    {"dim", cfg.teacher.dim},
                    {"heads", cfg.teacher.heads},
                    {"layers", cfg.teacher.layers},
                    {"ff_dim", cfg.teacher.ff_dim},
                    {"relu_layer_norm", cfg.teacher.relu_layer_norm}};
    j["train"] = {{"lr", cfg.train.lr},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"min_epochs", cfg.train.min_epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"max_batches_per_epoch", cfg.train.max_batches_per_epoch},
                  {"verbose", cfg.train.verbose}};
    j["distill"] = {{"alpha", cfg.alpha},
                    {"beta", cfg.beta},
                    {"temperature", cfg.temperature},
                    {"use_ckd", cfg.use_ckd}};
    j["threshold"] = {{"use_quantile", cfg.threshold.use_quantile},
                      {"quantile", cfg.threshold.quantile},
                      {"fixed", cfg.threshold.fixed}};
    j["attacks"] = json::array();
    for (const auto& a : cfg.attacks) j["attacks"].push_back(scenario_to_record(a));

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path.string());
    out << j.dump(2) << '\n';
}

fs::path resolve_workdir(const PipelineConfig& cfg) {
    const char* env = std::getenv("CANIDS_WORKDIR");
    if (env && *env) return fs::path(env);
    return fs::path(cfg.workdir);
}

// ---------------------------------------------------------------- archives

void save_dataset_bundle(const fs::path& path, const DatasetBundle& ds) {
    NamedTensorArchive a;
    Vec meta{static_cast<double>(ds.can_id),
             static_cast<double>(ds.T),
             static_cast<double>(ds.L),
             static_cast<double>(ds.stride),
             static_cast<double>(ds.train.size()),
             static_cast<double>(ds.val.size()),
             static_cast<double>(ds.test.size()),
             static_cast<double>(ds.test_col_begin)};
    a.add("meta", {static_cast<long>(meta.size())}, meta);
    a.add("norm.min", {static_cast<long>(ds.stats.min.size())}, ds.stats.min);
    a.add("norm.max", {static_cast<long>(ds.stats.max.size())}, ds.stats.max);
    a.add("series.normalized", {ds.normalized.rows, ds.normalized.cols}, ds.normalized.d);
    a.save(path);
}

DatasetBundle load_dataset_bundle(const fs::path& path) {
    auto a = NamedTensorArchive::load(path);
    const auto& meta = a.at("meta").values;
    if (meta.size() != 8) throw std::runtime_error("dataset archive: bad meta block");

    DatasetBundle ds;
    ds.can_id = static_cast<uint16_t>(meta[0]);
    ds.T = static_cast<int>(meta[1]);
    ds.L = static_cast<int>(meta[2]);
    ds.stride = static_cast<int>(meta[3]);
    const auto n_train = static_cast<size_t>(meta[4]);
    const auto n_val = static_cast<size_t>(meta[5]);
    const auto n_test = static_cast<size_t>(meta[6]);
    ds.test_col_begin = static_cast<long>(meta[7]);
    ds.stats.min = a.at("norm.min").values;
    ds.stats.max = a.at("norm.max").values;

    const auto& se = a.at("series.normalized");
    ds.normalized.resize(static_cast<int>(se.shape[0]), static_cast<int>(se.shape[1]));
    ds.normalized.d = se.values;

    auto samples = make_windows(ds.normalized, ds.T, ds.L, ds.stride);
    if (samples.size() != n_train + n_val + n_test)
        throw std::runtime_error("dataset archive: window count mismatch");
    ds.train.assign(samples.begin(), samples.begin() + static_cast<long>(n_train));
    ds.val.assign(samples.begin() + static_cast<long>(n_train),
                  samples.begin() + static_cast<long>(n_train + n_val));
    ds.test.assign(samples.begin() + static_cast<long>(n_train + n_val), samples.end());
    return ds;
}

void save_teacher(const fs::path& path, const PatchstParams& p, const TrainHistory* history) {
    NamedTensorArchive a;
    const auto& c = p.cfg;
    Vec meta{static_cast<double>(c.window),  static_cast<double>(c.horizon),
             static_cast<double>(c.patch_len), static_cast<double>(c.stride),
             static_cast<double>(c.dim),     static_cast<double>(c.heads),
             static_cast<double>(c.layers),  static_cast<double>(c.ff_dim),
             c.relu_layer_norm ? 1.0 : 0.0,  c.ln_eps};
    a.add("meta", {static_cast<long>(meta.size())}, meta);
    PatchstParams copy = p;
    put_tensors(a, copy.tensors());
    add_history(a, history);
    a.save(path);
}

PatchstParams load_teacher(const fs::path& path) {
    auto a = NamedTensorArchive::load(path);
    const auto& meta = a.at("meta").values;
    if (meta.size() != 10) throw std::runtime_error("teacher archive: bad meta block");
    PatchstConfig c;
    c.window = static_cast<int>(meta[0]);
    c.horizon = static_cast<int>(meta[1]);
    c.patch_len = static_cast<int>(meta[2]);
    c.stride = static_cast<int>(meta[3]);
    c.dim = static_cast<int>(meta[4]);
    c.heads = static_cast<int>(meta[5]);
    c.layers = static_cast<int>(meta[6]);
    c.ff_dim = static_cast<int>(meta[7]);
    c.relu_layer_norm = meta[8] != 0.0;
    c.ln_eps = meta[9];
    PatchstParams p = PatchstParams::zeros(c);
    get_tensors(a, p.tensors());
    return p;
}

void save_student(const fs::path& path, const StcamParams& p, const AdapterParams* adapter,
                  const TrainHistory* history) {
    NamedTensorArchive a;
    const auto& c = p.cfg;
    Vec meta{static_cast<double>(c.signals), static_cast<double>(c.window),
             static_cast<double>(c.horizon), static_cast<double>(c.filters),
             static_cast<double>(c.hidden),  c.dropout};
    a.add("meta", {static_cast<long>(meta.size())}, meta);
    StcamParams copy = p;
    put_tensors(a, copy.tensors());
    if (adapter) {
        AdapterParams ac = *adapter;
        put_tensors(a, ac.tensors());
    }
    add_history(a, history);
    a.save(path);
}

StcamParams load_student(const fs::path& path, AdapterParams* adapter) {
    auto a = NamedTensorArchive::load(path);
    const auto& meta = a.at("meta").values;
    if (meta.size() != 6) throw std::runtime_error("student archive: bad meta block");
    StcamConfig c;
    c.signals = static_cast<int>(meta[0]);
    c.window = static_cast<int>(meta[1]);
    c.horizon = static_cast<int>(meta[2]);
    c.filters = static_cast<int>(meta[3]);
    c.hidden = static_cast<int>(meta[4]);
    c.dropout = meta[5];
    StcamParams p = StcamParams::zeros(c);
    get_tensors(a, p.tensors());
    if (adapter) {
        if (a.contains("adapter.w")) {
            const auto& w = a.at("adapter.w");
            const int rows = static_cast<int>(w.shape[0]);
            const int cols = static_cast<int>(w.shape[1]);
            const int dim = rows / c.signals;
            *adapter = AdapterParams::zeros(c.signals, dim, cols);
            get_tensors(a, adapter->tensors());
        } else {
            *adapter = AdapterParams{};
        }
    }
    return p;
}

double archive_best_val_mae(const fs::path& path) {
    auto a = NamedTensorArchive::load(path);
    if (!a.contains("train.best_val_mae")) return std::nan("");
    return a.at("train.best_val_mae").values.at(0);
}

// ---------------------------------------------------------------- stages

void stage_ingest(const PipelineConfig& cfg) {
    validate_config(cfg);
    const fs::path wd = resolve_workdir(cfg);
    fs::create_directories(wd);

    std::vector<CanFrame> frames;
    if (cfg.trace_path.empty()) {
        SynthSpec spec = default_trace_spec(cfg.seed);
        spec.duration = cfg.synth_duration;
        frames = generate(spec);
    } else {
        frames = read_trace(cfg.trace_path);
    }
    if (frames.empty()) throw std::runtime_error("ingest: trace holds no frames");

    write_trace_csv(wd / "frames.csv", frames);
    save_config(cfg, wd / "config.json");
    update_manifest(wd);
}

void stage_extract(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    auto frames = read_trace(wd / "frames.csv");
    auto grouped = group_by_id(frames);

    std::map<uint16_t, SignalLayout> layouts;
    for (const auto& [id, fs_] : grouped) {
        if (fs_.size() < 3) continue; // selection would reject these anyway
        auto profile = bit_flip_rates(fs_);
        auto layout = find_boundaries(profile, cfg.boundary);
        compute_layout_stats(fs_, layout);
        layouts[id] = std::move(layout);
    }
    auto selected = select_candidate_ids(grouped, layouts, cfg.selection);
    if (selected.empty())
        throw std::runtime_error("extract: no id passed candidate selection");

    save_layouts(wd / "layouts.txt", layouts);
    std::ofstream out(wd / "selected_ids.txt");
    if (!out) throw std::runtime_error("cannot write selected_ids.txt");
    for (uint16_t id : selected) out << id_token(id) << '\n';
    out.close();
    update_manifest(wd);
}

std::vector<uint16_t> read_selected_ids(const fs::path& workdir) {
    std::ifstream in(workdir / "selected_ids.txt");
    if (!in) throw std::runtime_error("cannot read selected_ids.txt, run extract first");
    std::vector<uint16_t> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ids.push_back(static_cast<uint16_t>(std::stoul(line, nullptr, 16)));
    }
    if (ids.empty()) throw std::runtime_error("selected_ids.txt lists no ids");
    return ids;
}

void stage_dataset(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    auto frames = read_trace(wd / "frames.csv");
    auto grouped = group_by_id(frames);
    auto layouts = load_layouts(wd / "layouts.txt");

    for (uint16_t id : read_selected_ids(wd)) {
        auto series = decode_series(grouped.at(id), layouts.at(id));
        auto ds = build_dataset(series, id, cfg.window, cfg.horizon, cfg.train_frac,
                                cfg.val_frac, cfg.stride);
        if (ds.train.empty())
            throw std::runtime_error("dataset: id " + id_token(id) + " has no training windows");
        save_dataset_bundle(wd / ("dataset_" + id_token(id) + ".ntar"), ds);
    }
    update_manifest(wd);
}

void stage_train_teacher(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        auto ds = load_dataset_bundle(wd / ("dataset_" + tok + ".ntar"));
        PatchstConfig mc = cfg.teacher;
        mc.window = ds.T;
        mc.horizon = ds.L;
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        auto res = train_teacher(ds.train, ds.val, mc, tc);
        save_teacher(wd / ("teacher_" + tok + ".ntar"), res.params, &res.history);
        write_history_csv(wd / ("history_teacher_" + tok + ".csv"), res.history);
    }
    update_manifest(wd);
}

void stage_train_student(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    const bool distill = cfg.use_ckd && cfg.beta != 0.0;
    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        auto ds = load_dataset_bundle(wd / ("dataset_" + tok + ".ntar"));

        StcamConfig sc;
        sc.signals = ds.normalized.rows;
        sc.window = ds.T;
        sc.horizon = ds.L;
        sc.filters = cfg.filters;
        sc.hidden = cfg.hidden;
        sc.dropout = cfg.dropout;

        PatchstParams teacher;
        if (distill) teacher = load_teacher(wd / ("teacher_" + tok + ".ntar"));

        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        auto res = train_student_ckd(ds.train, ds.val, sc, distill ? &teacher : nullptr,
                                     cfg.alpha, cfg.beta, cfg.temperature, tc);
        save_student(wd / ("student_" + tok + ".ntar"), res.params,
                     distill ? &res.adapter : nullptr, &res.history);
        write_history_csv(wd / ("history_student_" + tok + ".csv"), res.history);
    }
    update_manifest(wd);
}

void stage_calibrate(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    std::FILE* out = std::fopen((wd / "thresholds.csv").string().c_str(), "w");
    if (!out) throw std::runtime_error("cannot write thresholds.csv");
    std::fputs("can_id,tau,n_scores\n", out);

    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        double tau;
        size_t n_scores = 0;
        if (cfg.threshold.use_quantile) {
            auto ds = load_dataset_bundle(wd / ("dataset_" + tok + ".ntar"));
            auto student = load_student(wd / ("student_" + tok + ".ntar"));
            if (ds.val.empty())
                throw std::runtime_error("calibrate: id " + tok +
                                         " has no validation windows for the quantile");
            std::vector<double> scores;
            scores.reserve(ds.val.size());
            for (const auto& s : ds.val) {
                auto o = stcam_forward(s.x, student);
                scores.push_back(anomaly_score(s.y.d.data(), o.y_hat.d.data(),
                                               static_cast<int>(s.y.d.size())));
            }
            tau = calibrate_threshold(scores, cfg.threshold);
            n_scores = scores.size();
        } else {
            tau = cfg.threshold.fixed;
        }
        std::fprintf(out, "%s,%.17g,%zu\n", tok.c_str(), tau, n_scores);
    }
    std::fclose(out);
    update_manifest(wd);
}

void stage_inject(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    std::ofstream rec(wd / "scenarios.txt");
    if (!rec) throw std::runtime_error("cannot write scenarios.txt");

    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        auto ds = load_dataset_bundle(wd / ("dataset_" + tok + ".ntar"));

        const long seg_len = ds.normalized.cols - ds.test_col_begin;
        Mat seg(ds.normalized.rows, static_cast<int>(seg_len));
        for (int m = 0; m < seg.rows; ++m)
            for (long n = 0; n < seg_len; ++n)
                seg(m, static_cast<int>(n)) =
                    ds.normalized(m, static_cast<int>(ds.test_col_begin + n));

        for (size_t k = 0; k < cfg.attacks.size(); ++k) {
            AttackScenario s = cfg.attacks[k];
            if (s.end > seg_len)
                throw std::runtime_error("inject: scenario " + std::to_string(k) +
                                         " does not fit the test segment of id " + tok);
            if (s.seed == 0) s.seed = cfg.seed * 1000003ull + k + 1;
            s.window = cfg.window; // label span after a silence gap
            auto res = inject(seg, s);

            NamedTensorArchive a;
            Vec meta{static_cast<double>(static_cast<int>(s.kind)),
                     static_cast<double>(static_cast<int>(s.granularity))};
            a.add("meta", {2}, meta);
            a.add("series", {res.series.rows, res.series.cols}, res.series.d);
            Vec labels(res.labels.begin(), res.labels.end());
            a.add("labels", {static_cast<long>(labels.size())}, labels);
            a.save(wd / ("injected_" + tok + "_" + std::to_string(k) + ".ntar"));

            rec << "id=" << tok << " index=" << k << ' ' << scenario_to_record(s) << '\n';
        }
    }
    rec.close();
    update_manifest(wd);
}

void stage_detect(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    auto taus = read_thresholds(wd / "thresholds.csv");

    std::FILE* out = std::fopen((wd / "attack_metrics.csv").string().c_str(), "w");
    if (!out) throw std::runtime_error("cannot write attack_metrics.csv");
    std::fputs("can_id,scenario,kind,granularity,windows,tp,fp,tn,fn,"
               "precision,recall,f1,error_rate,false_alarm_rate,flags\n",
               out);

    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        auto student = load_student(wd / ("student_" + tok + ".ntar"));
        const double tau = taus.at(tok);

        for (size_t k = 0; k < cfg.attacks.size(); ++k) {
            const fs::path apath = wd / ("injected_" + tok + "_" + std::to_string(k) + ".ntar");
            auto a = NamedTensorArchive::load(apath);
            const auto& meta = a.at("meta").values;
            const auto& se = a.at("series");
            Mat series(static_cast<int>(se.shape[0]), static_cast<int>(se.shape[1]));
            series.d = se.values;
            const auto& lab = a.at("labels").values;
            std::vector<uint8_t> steps(lab.size());
            for (size_t i = 0; i < lab.size(); ++i) steps[i] = lab[i] != 0.0 ? 1 : 0;

            auto samples = make_windows(series, cfg.window, cfg.horizon, 1);
            auto truth = label_windows(steps, cfg.window, cfg.horizon);
            if (samples.size() != truth.size())
                throw std::runtime_error("detect: window and label counts disagree");
            if (samples.empty())
                throw std::runtime_error("detect: injected stream too short for one window");

            Mat y, y_hat;
            forecast_windows(student, samples, y, y_hat);
            auto scores = window_scores(y, y_hat);
            auto verdicts = classify(scores, tau);
            auto report = compute_metrics(truth, verdicts);

            write_window_trace_csv(
                (wd / ("detect_" + tok + "_" + std::to_string(k) + ".csv")).string(), scores,
                verdicts, truth);

            std::fprintf(out, "%s,%zu,%s,%s,%zu,%ld,%ld,%ld,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n",
                         tok.c_str(), k,
                         to_string(static_cast<AttackKind>(static_cast<int>(meta[0]))),
                         to_string(static_cast<Granularity>(static_cast<int>(meta[1]))),
                         samples.size(), report.tp, report.fp, report.tn, report.fn,
                         report.precision, report.recall, report.f1, report.error_rate,
                         report.false_alarm_rate, flag_string(report).c_str());
        }
    }
    std::fclose(out);
    update_manifest(wd);
}

void stage_report(const PipelineConfig& cfg) {
    const fs::path wd = resolve_workdir(cfg);
    auto taus = read_thresholds(wd / "thresholds.csv");

    // f1 per id, averaged over scenarios
    std::map<std::string, std::pair<double, long>> f1_acc;
    {
        std::ifstream in(wd / "attack_metrics.csv");
        if (!in) throw std::runtime_error("cannot read attack_metrics.csv, run detect first");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() < 12) throw std::runtime_error("attack_metrics.csv: malformed line");
            auto& acc = f1_acc[f[0]];
            acc.first += std::stod(f[11]);
            acc.second += 1;
        }
    }

    std::FILE* sum = std::fopen((wd / "summary.csv").string().c_str(), "w");
    if (!sum) throw std::runtime_error("cannot write summary.csv");
    std::fputs("can_id,signals,train_windows,val_windows,test_windows,student_params,"
               "teacher_params,student_val_mae,teacher_val_mae,tau,mean_attack_f1\n",
               sum);

    std::FILE* pred = std::fopen((wd / "prediction_stats.csv").string().c_str(), "w");
    if (!pred) {
        std::fclose(sum);
        throw std::runtime_error("cannot write prediction_stats.csv");
    }
    std::fputs("can_id,test_mae,test_mape_pct,mape_skipped,mape_undefined\n", pred);

    for (uint16_t id : read_selected_ids(wd)) {
        const std::string tok = id_token(id);
        auto ds = load_dataset_bundle(wd / ("dataset_" + tok + ".ntar"));
        auto student = load_student(wd / ("student_" + tok + ".ntar"));
        const double student_mae = archive_best_val_mae(wd / ("student_" + tok + ".ntar"));

        size_t teacher_params = 0;
        double teacher_mae = std::nan("");
        const fs::path tpath = wd / ("teacher_" + tok + ".ntar");
        if (fs::exists(tpath)) {
            auto teacher = load_teacher(tpath);
            teacher_params = teacher.param_count();
            teacher_mae = archive_best_val_mae(tpath);
        }

        const auto it = f1_acc.find(tok);
        const double mean_f1 =
            it != f1_acc.end() && it->second.second > 0 ? it->second.first / it->second.second
                                                        : std::nan("");

        std::fprintf(sum, "%s,%d,%zu,%zu,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", tok.c_str(),
                     ds.normalized.rows, ds.train.size(), ds.val.size(), ds.test.size(),
                     student.param_count(), teacher_params, student_mae, teacher_mae,
                     taus.at(tok), mean_f1);

        if (!ds.test.empty()) {
            Mat y, y_hat;
            forecast_windows(student, ds.test, y, y_hat);
            auto st = prediction_stats(y, y_hat);
            std::fprintf(pred, "%s,%.17g,%.17g,%ld,%d\n", tok.c_str(), st.mae, st.mape,
                         st.mape_skipped, st.mape_undefined ? 1 : 0);
        }
    }
    std::fclose(sum);
    std::fclose(pred);
    update_manifest(wd);
}

void run_pipeline(const PipelineConfig& cfg) {
    stage_ingest(cfg);
    stage_extract(cfg);
    stage_dataset(cfg);
    if (cfg.use_ckd && cfg.beta != 0.0) stage_train_teacher(cfg);
    stage_train_student(cfg);
    stage_calibrate(cfg);
    stage_inject(cfg);
    stage_detect(cfg);
    stage_report(cfg);
}

void update_manifest(const fs::path& workdir) {
    std::vector<std::pair<std::string, uint64_t>> rows;
    for (const auto& e : fs::directory_iterator(workdir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == "manifest.txt") continue;
        rows.emplace_back(name, hash_file(e.path()));
    }
    std::sort(rows.begin(), rows.end());

    std::FILE* out = std::fopen((workdir / "manifest.txt").string().c_str(), "w");
    if (!out) throw std::runtime_error("cannot write manifest.txt");
    for (const auto& [name, hash] : rows)
        std::fprintf(out, "%s %016llx\n", name.c_str(), static_cast<unsigned long long>(hash));
    std::fclose(out);
}

} // namespace canids
