// Command line front end for the intrusion detection pipeline. Every
// subcommand is one pipeline stage; `run` chains them all. Options override
// the JSON config, which itself overrides built-in defaults.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "canids/distill.hpp"
#include "canids/frame.hpp"
#include "canids/pipeline.hpp"
#include "canids/signal_extract.hpp"
#include "canids/synthgen.hpp"

using namespace canids;

namespace {

struct Opts {
    std::string config;
    std::optional<std::string> workdir, trace;
    std::optional<uint64_t> seed;
    std::optional<double> duration, lr, train_frac, val_frac, dropout;
    std::optional<double> alpha, beta, temperature, quantile, fixed_tau;
    std::optional<int> window, horizon, stride, epochs, patience, batch, filters, hidden;
    bool no_ckd = false;
    bool fixed_threshold = false;
};

void add_opts(CLI::App* s, Opts& o) {
    s->add_option("-c,--config", o.config, "JSON config file");
    s->add_option("-w,--workdir", o.workdir, "artifact directory (default: workdir)");
    s->add_option("--seed", o.seed, "master random seed");
    s->add_option("--trace", o.trace, "input trace, csv or candump; omit to synthesize");
    s->add_option("--duration", o.duration, "seconds of synthetic trace");
    s->add_option("-T,--window", o.window, "past steps per sample");
    s->add_option("-L,--horizon", o.horizon, "future steps to forecast");
    s->add_option("--stride", o.stride, "window stride over the series");
    s->add_option("--train-frac", o.train_frac, "fraction of windows used for training");
    s->add_option("--val-frac", o.val_frac, "tail fraction of the train block for validation");
    s->add_option("--filters", o.filters, "student conv channels");
    s->add_option("--hidden", o.hidden, "student recurrent state size");
    s->add_option("--dropout", o.dropout, "student dropout rate");
    s->add_option("--lr", o.lr, "learning rate");
    s->add_option("--epochs", o.epochs, "epoch cap");
    s->add_option("--patience", o.patience, "early stopping patience");
    s->add_option("--batch", o.batch, "minibatch size");
    s->add_option("--alpha", o.alpha, "forecast loss weight");
    s->add_option("--beta", o.beta, "distillation loss weight");
    s->add_option("--temperature", o.temperature, "softmax temperature");
    s->add_flag("--no-ckd", o.no_ckd, "train the student without a teacher");
    s->add_option("--quantile", o.quantile, "clean-score quantile for the threshold");
    s->add_option("--fixed-tau", o.fixed_tau, "fixed threshold, disables the quantile");
}

PipelineConfig build_config(const Opts& o) {
    PipelineConfig cfg = o.config.empty() ? default_config() : load_config(o.config);
    if (o.workdir) cfg.workdir = *o.workdir;
    if (o.seed) cfg.seed = *o.seed;
    if (o.trace) cfg.trace_path = *o.trace;
    if (o.duration) cfg.synth_duration = *o.duration;
    if (o.window) cfg.window = *o.window;
    if (o.horizon) cfg.horizon = *o.horizon;
    if (o.stride) cfg.stride = *o.stride;
    if (o.train_frac) cfg.train_frac = *o.train_frac;
    if (o.val_frac) cfg.val_frac = *o.val_frac;
    if (o.filters) cfg.filters = *o.filters;
    if (o.hidden) cfg.hidden = *o.hidden;
    if (o.dropout) cfg.dropout = *o.dropout;
    if (o.lr) cfg.train.lr = *o.lr;
    if (o.epochs) cfg.train.max_epochs = *o.epochs;
    if (o.patience) cfg.train.patience = *o.patience;
    if (o.batch) cfg.train.batch_size = *o.batch;
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.beta) cfg.beta = *o.beta;
    if (o.temperature) cfg.temperature = *o.temperature;
    if (o.no_ckd) cfg.use_ckd = false;
    if (o.quantile) cfg.threshold.quantile = *o.quantile;
    if (o.fixed_tau) {
        cfg.threshold.use_quantile = false;
        cfg.threshold.fixed = *o.fixed_tau;
    }
    validate_config(cfg);
    return cfg;
}

int run_grid(const Opts& o, const std::string& id_hex, int budget_epochs, bool with_ckd,
             const std::string& out_name) {
    PipelineConfig cfg = build_config(o);
    const auto wd = resolve_workdir(cfg);
    auto frames = read_trace(wd / "frames.csv");
    auto grouped = group_by_id(frames);
    auto layouts = load_layouts(wd / "layouts.txt");

    uint16_t id;
    if (id_hex.empty()) {
        id = read_selected_ids(wd).front();
    } else {
        id = static_cast<uint16_t>(std::stoul(id_hex, nullptr, 16));
    }
    if (!layouts.count(id)) throw std::runtime_error("grid: no layout for id " + id_token(id));

    auto series = decode_series(grouped.at(id), layouts.at(id));
    TrainConfig base = cfg.train;
    base.seed = cfg.seed;
    PatchstConfig teacher_base = cfg.teacher;

    GridSpace space;
    auto result = grid_search(series, cfg.horizon, space, base, budget_epochs, with_ckd,
                              teacher_base);
    write_grid_csv(wd / out_name, result);
    std::printf("best: window=%d filters=%d hidden=%d batch=%d val_mae=%.6g\n",
                result.best.window, result.best.filters, result.best.hidden,
                result.best.batch, result.best.val_mae);
    std::printf("wrote %s\n", (wd / out_name).string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAN bus intrusion detection pipeline"};
    app.require_subcommand(1);

    Opts o;
    std::string synth_out = "trace.csv";
    std::string grid_id, grid_out = "grid.csv";
    int grid_budget = 10;
    bool grid_ckd = false;

    auto* synth = app.add_subcommand("synth", "write a synthetic trace and exit");
    synth->add_option("-o,--out", synth_out, "output csv path");
    synth->add_option("--duration", o.duration, "seconds of traffic");
    synth->add_option("--seed", o.seed, "generator seed");

    struct StageCmd {
        const char* name;
        const char* help;
        void (*fn)(const PipelineConfig&);
    };
    const StageCmd stages[] = {
        {"ingest", "read or synthesize the trace, write frames.csv", stage_ingest},
        {"extract", "recover signal layouts and pick candidate ids", stage_extract},
        {"build-dataset", "normalize and window the decoded series", stage_dataset},
        {"train-teacher", "fit the transformer forecaster", stage_train_teacher},
        {"train-student", "fit the compact forecaster, optionally distilled", stage_train_student},
        {"calibrate", "derive detection thresholds from clean scores", stage_calibrate},
        {"inject", "apply the configured attacks to the test segment", stage_inject},
        {"detect", "score injected streams and write metrics", stage_detect},
        {"report", "aggregate summary and prediction statistics", stage_report},
    };
    std::vector<std::pair<CLI::App*, const StageCmd*>> stage_cmds;
    for (const auto& sc : stages) {
        auto* sub = app.add_subcommand(sc.name, sc.help);
        add_opts(sub, o);
        stage_cmds.emplace_back(sub, &sc);
    }

    auto* run = app.add_subcommand("run", "execute every stage in order");
    add_opts(run, o);

    auto* grid = app.add_subcommand("grid-search", "sweep window/filters/hidden/batch");
    add_opts(grid, o);
    grid->add_option("--id", grid_id, "hex id to sweep (default: first selected)");
    grid->add_option("--budget-epochs", grid_budget, "epochs per cell");
    grid->add_flag("--with-ckd", grid_ckd, "distill inside the sweep");
    grid->add_option("-o,--out", grid_out, "csv name inside the workdir");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            SynthSpec spec = default_trace_spec(o.seed.value_or(1));
            spec.duration = o.duration.value_or(35.0);
            auto frames = generate(spec);
            write_trace_csv(synth_out, frames);
            std::printf("wrote %zu frames to %s\n", frames.size(), synth_out.c_str());
            return 0;
        }
        if (grid->parsed()) return run_grid(o, grid_id, grid_budget, grid_ckd, grid_out);
        if (run->parsed()) {
            PipelineConfig cfg = build_config(o);
            run_pipeline(cfg);
            std::printf("pipeline complete, artifacts in %s\n",
                        resolve_workdir(cfg).string().c_str());
            return 0;
        }
        for (const auto& [sub, sc] : stage_cmds) {
            if (sub->parsed()) {
                PipelineConfig cfg = build_config(o);
                sc->fn(cfg);
                std::printf("%s done\n", sc->name);
                return 0;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
