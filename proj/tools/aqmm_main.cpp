// aqmm: train, evaluate, sample, and benchmark SO(3) density models on the
// six-viewpoint toy task. Machine-readable JSON goes to stdout, human
// diagnostics to stderr.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "aqmm/checkpoint.hpp"
#include "aqmm/config.hpp"
#include "aqmm/evaluation.hpp"
#include "aqmm/sampler.hpp"

using nlohmann::json;
using namespace aqmm;

namespace {

json quat_json(const UnitQuaternion& q) {
    return json::array({q.x(), q.y(), q.z(), q.w()});
}

// FNV-1a over the embedded config text, as a short reproducibility digest.
std::string config_digest(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ToyModeSet load_or_generate_modes(const std::string& modes_path, std::uint64_t seed) {
    if (!modes_path.empty()) return read_mode_set(modes_path);
    std::cerr << "modes: generating from dataset seed " << seed << "\n";
    return generate_mode_set(seed);
}

RunConfig embedded_run_config(const Checkpoint& ckpt) {
    if (ckpt.embedded_config.empty()) return RunConfig{};
    return RunConfig::from_toml_text(ckpt.embedded_config);
}

void warn_if_odd_bins(int n_bins) {
    if (n_bins % 2 != 0) {
        std::cerr << "warning: n_bins = " << n_bins
                  << " is odd; zero sits inside a bin instead of on an edge\n";
    }
}

// Density, sampling, and prediction adapters per model kind.
struct LoadedModel {
    Checkpoint ckpt;
    std::optional<ScorerParameters> scorer;
    std::optional<GridModel> grid_model;
    std::optional<RotationGrid> grid;
    std::vector<GridSampler> grid_samplers;

    static LoadedModel open(const std::string& path) {
        LoadedModel m{load_checkpoint(path)};
        if (m.ckpt.kind == ModelKind::grid) {
            m.grid_model = m.ckpt.to_grid_model();
            const RunConfig rc = embedded_run_config(m.ckpt);
            m.grid = RotationGrid::haar(rc.model.grid_size, rc.eval.seed);
            std::cerr << "grid: " << m.grid->size() << " Haar cells (seed " << rc.eval.seed
                      << ")\n";
        } else {
            m.scorer = m.ckpt.to_scorer();
        }
        return m;
    }

    std::string kind_name() const { return model_kind_name(ckpt.kind); }

    LogDensityFn density_fn() const {
        switch (ckpt.kind) {
            case ModelKind::aquamam:
                return [this](int v, const UnitQuaternion& q) {
                    return log_density(*scorer, v, q);
                };
            case ModelKind::aquamam_mog:
                return [this](int v, const UnitQuaternion& q) {
                    return mog_log_density(*scorer, v, q);
                };
            case ModelKind::grid:
                return [this](int v, const UnitQuaternion& q) {
                    return grid_log_density(*grid_model, v, q, *grid);
                };
        }
        throw std::runtime_error("unknown model kind");
    }

    SampleFn sample_fn() {
        switch (ckpt.kind) {
            case ModelKind::aquamam:
                return [this](int v, Rng& rng) {
                    return sample_quaternion(*scorer, v, rng).first;
                };
            case ModelKind::grid: {
                if (grid_samplers.empty()) {
                    for (int v = 0; v < grid_model->config().viewpoints; ++v) {
                        grid_samplers.emplace_back(*grid_model, v, *grid);
                    }
                }
                return [this](int v, Rng& rng) { return grid_samplers[v].draw(rng); };
            }
            case ModelKind::aquamam_mog:
                throw std::runtime_error(
                    "sampling is not supported for aquamam-mog checkpoints (density only)");
        }
        throw std::runtime_error("unknown model kind");
    }

    PredictFn predict_fn() const {
        switch (ckpt.kind) {
            case ModelKind::aquamam:
                return [this](int v) { return predict_quaternion(*scorer, v); };
            case ModelKind::grid:
                return [this](int v) {
                    const Eigen::VectorXd scores = grid_model->score_batch(v, grid->cells);
                    int best = 0;
                    for (int i = 1; i < scores.size(); ++i) {
                        if (scores[i] > scores[best]) best = i;
                    }
                    return grid->cells[best];
                };
            case ModelKind::aquamam_mog:
                throw std::runtime_error(
                    "prediction is not supported for aquamam-mog checkpoints (density only)");
        }
        throw std::runtime_error("unknown model kind");
    }
};

json sampling_report_json(const SamplingReport& report) {
    json j;
    j["sample_count"] = report.sample_count;
    j["invalid_count"] = report.invalid_count;
    j["invalid_rate"] = report.invalid_rate;
    j["mean_assignment_deg"] = report.mean_assignment_deg;
    j["max_assignment_deg"] = report.max_assignment_deg;
    j["tvd_to_uniform"] = report.tvd_to_uniform;
    j["mode_proportions"] = report.mode_proportions;
    return j;
}

int cmd_toy_gen(const std::string& out, std::uint64_t seed, long samples,
                std::uint64_t sample_seed) {
    const ToyModeSet ms = generate_mode_set(seed);
    if (samples > 0) {
        write_dataset(out, ms, samples, sample_seed);
    } else {
        write_mode_set(out, ms);
    }
    json j;
    j["mode_set"] = out;
    j["seed"] = seed;
    j["total_modes"] = ms.total_modes();
    j["samples"] = samples;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              const std::string& modes_path) {
    const RunConfig config = RunConfig::from_toml_file(config_path);
    config.validate();
    warn_if_odd_bins(config.model.n_bins);
    const ToyModeSet ms = load_or_generate_modes(modes_path, config.dataset.seed);
    const auto start = std::chrono::steady_clock::now();

    json summary;
    std::vector<EpochRecord> epochs;
    if (config.model.kind == "grid") {
        GridTrainResult result = train_grid_model(ms, config.grid_model_config(),
                                                  config.grid_train_config(),
                                                  config.training.seed);
        epochs = result.epochs;
        summary["best_val_nll"] = result.best_val_nll;
        summary["best_epoch"] = result.best_epoch;
        save_checkpoint(out, Checkpoint::from_grid_model(result.model, config.to_toml()));
    } else {
        TrainResult result = train_scorer(config.scorer_config(), ms, config.train_config(),
                                          config.training.seed);
        epochs = result.log.epochs;
        summary["best_val_nll"] = result.log.best_val_nll;
        summary["best_epoch"] = result.log.best_epoch;
        summary["lr_halvings"] = result.log.total_halvings;
        save_checkpoint(out, Checkpoint::from_scorer(result.params, config.to_toml()));
    }

    const std::string log_path = out + ".log.jsonl";
    std::ofstream log(log_path);
    for (const EpochRecord& e : epochs) {
        json line;
        line["epoch"] = e.epoch;
        line["train_nll"] = e.train_nll;
        line["val_nll"] = e.val_nll;
        line["lr"] = e.lr;
        log << line.dump() << "\n";
    }

    summary["checkpoint"] = out;
    summary["training_log"] = log_path;
    summary["epochs"] = epochs.size();
    summary["model_kind"] = config.model.kind;
    summary["wall_clock_sec"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& modes_path) {
    LoadedModel model = LoadedModel::open(checkpoint_path);
    const RunConfig rc = embedded_run_config(model.ckpt);
    const ToyModeSet ms = load_or_generate_modes(modes_path, rc.dataset.seed);
    const std::vector<EvalEntry> entries = evaluation_set(ms);

    const AverageLl result = average_ll(model.density_fn(), ms, entries);
    const BinPartition partition(rc.model.n_bins);
    const OptimalLl oracle = theoretical_optimal_ll(ms, partition);

    json j;
    j["model_kind"] = model.kind_name();
    j["average_ll"] = result.mean_ll;
    j["oracle_ll"] = oracle.total;
    j["oracle_gap"] = oracle.total - result.mean_ll;
    if (model.ckpt.kind == ModelKind::aquamam) {
        // Mean -ln P(sentence): the average LL minus its dilution share.
        j["classification_nll"] = oracle.dilution - result.mean_ll;
        j["optimal_classification_nll"] = -oracle.classification;
    }
    if (model.ckpt.kind != ModelKind::grid && !model.ckpt.embedded_config.empty()) {
        // Recompute the held-out validation NLL the training loop tracked;
        // checkpoint fidelity makes this match the log bit for bit.
        j["validation_nll"] =
            validation_nll(*model.scorer, ms, rc.train_config(), rc.training.seed);
    }
    if (model.ckpt.kind == ModelKind::grid) {
        j["theoretical_max_ll"] = theoretical_max_ll(model.grid->size() + 1);
    }
    if (!result.neg_inf_entries.empty()) {
        json bad = json::array();
        for (const EvalEntry& e : result.neg_inf_entries) {
            bad.push_back({{"viewpoint", e.viewpoint}, {"mode", e.mode_index}});
        }
        j["neg_inf_entries"] = bad;
    }
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_sample(const std::string& checkpoint_path, const std::string& modes_path, long n,
               std::uint64_t seed, const std::string& out, int threads) {
    LoadedModel model = LoadedModel::open(checkpoint_path);
    const RunConfig rc = embedded_run_config(model.ckpt);
    const ToyModeSet ms = load_or_generate_modes(modes_path, rc.dataset.seed);
    const BinPartition partition(rc.model.n_bins);

    const SamplingReport report =
        sampling_report(model.sample_fn(), ms, partition, n, seed, threads);

    if (!out.empty()) {
        std::ofstream samples_out(out);
        if (!samples_out) throw std::runtime_error("cannot open " + out);
        Rng rng(derive_seed(seed, 1ULL << 32));
        const SampleFn fn = model.sample_fn();
        for (long i = 0; i < n; ++i) {
            const int viewpoint = static_cast<int>(rng.uniform_index(ms.viewpoints()));
            const UnitQuaternion q = fn(viewpoint, rng);
            json line;
            line["viewpoint"] = viewpoint;
            line["q"] = quat_json(q);
            samples_out << line.dump() << "\n";
        }
    }

    json j = sampling_report_json(report);
    j["model_kind"] = model.kind_name();
    j["seed"] = seed;
    if (!out.empty()) j["samples_file"] = out;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& modes_path) {
    LoadedModel model = LoadedModel::open(checkpoint_path);
    const RunConfig rc = embedded_run_config(model.ckpt);
    const ToyModeSet ms = load_or_generate_modes(modes_path, rc.dataset.seed);

    const PredictFn fn = model.predict_fn();
    const PredictionError err = prediction_error(fn, ms);

    json per_viewpoint = json::array();
    for (int v = 0; v < ms.viewpoints(); ++v) {
        json row;
        row["viewpoint"] = v;
        row["prediction"] = quat_json(fn(v));
        row["error_deg"] = err.per_viewpoint_deg[v];
        per_viewpoint.push_back(row);
    }
    json j;
    j["model_kind"] = model.kind_name();
    j["predictions"] = per_viewpoint;
    j["mean_error_deg"] = err.overall_deg;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_bench(const std::string& checkpoint_path, const std::string& baseline_path, int grid_m,
              const std::string& modes_path, std::uint64_t seed) {
    const Checkpoint main_ckpt = load_checkpoint(checkpoint_path);
    const Checkpoint baseline_ckpt = load_checkpoint(baseline_path);
    if (main_ckpt.kind != ModelKind::aquamam) {
        throw std::runtime_error("bench: --checkpoint must be an aquamam model");
    }
    if (baseline_ckpt.kind != ModelKind::grid) {
        throw std::runtime_error("bench: --baseline-checkpoint must be a grid model");
    }
    const ScorerParameters scorer = main_ckpt.to_scorer();
    const GridModel baseline = baseline_ckpt.to_grid_model();

    BenchConfig bc;
    bc.seed = seed;
    ExperimentRecord record = throughput_bench(scorer, baseline, grid_m, bc);
    record.model_kind = model_kind_name(main_ckpt.kind);
    record.config_digest = config_digest(main_ckpt.embedded_config);

    if (!modes_path.empty()) {
        const ToyModeSet ms = read_mode_set(modes_path);
        const std::vector<EvalEntry> entries = evaluation_set(ms);
        record.average_ll =
            average_ll([&](int v, const UnitQuaternion& q) { return log_density(scorer, v, q); },
                       ms, entries)
                .mean_ll;
        record.mean_prediction_error_deg =
            prediction_error([&](int v) { return predict_quaternion(scorer, v); }, ms).overall_deg;
    }

    json j;
    j["model_kind"] = record.model_kind;
    j["config_digest"] = record.config_digest;
    j["seed"] = record.seed;
    j["grid_m"] = grid_m;
    j["average_ll"] = record.average_ll;
    j["mean_prediction_error_deg"] = record.mean_prediction_error_deg;
    j["evals_per_sec"] = record.throughput.evals_per_sec;
    j["samples_per_sec"] = record.throughput.samples_per_sec;
    j["predictions_per_sec"] = record.throughput.predictions_per_sec;
    j["baseline_eval_time_m"] = record.baseline_eval_time_m;
    j["baseline_eval_time_2m"] = record.baseline_eval_time_2m;
    j["model_eval_time_m"] = record.model_eval_time_m;
    j["model_eval_time_2m"] = record.model_eval_time_2m;
    j["baseline_time_ratio"] = record.baseline_time_ratio;
    j["model_time_ratio"] = record.model_time_ratio;
    j["model_to_baseline_eval_ratio"] = record.model_to_baseline_eval_ratio;
    j["wall_clock_sec"] = record.wall_clock_sec;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_export_viz(const std::string& checkpoint_path, const std::string& modes_path,
                   int viewpoint, long n, std::uint64_t seed, const std::string& out) {
    LoadedModel model = LoadedModel::open(checkpoint_path);
    const RunConfig rc = embedded_run_config(model.ckpt);
    const ToyModeSet ms = load_or_generate_modes(modes_path, rc.dataset.seed);
    if (viewpoint < 0 || viewpoint >= ms.viewpoints()) {
        throw std::runtime_error("export-viz: viewpoint out of range");
    }
    if (n < 2) throw std::runtime_error("export-viz: need at least two points");

    const LogDensityFn density = model.density_fn();
    std::vector<VizPoint> points;
    points.reserve(n);

    // One ground-truth rotation, half-minus-one model samples, half uniform.
    const UnitQuaternion truth = ms.modes(viewpoint)[0];
    points.push_back(VizPoint{truth, density(viewpoint, truth), "truth"});
    const long n_model = n / 2 - 1;
    const long n_uniform = n - 1 - n_model;
    Rng rng(seed);
    const SampleFn sampler = model.sample_fn();
    for (long i = 0; i < n_model; ++i) {
        const UnitQuaternion q = sampler(viewpoint, rng);
        points.push_back(VizPoint{q, density(viewpoint, q), "model"});
    }
    for (long i = 0; i < n_uniform; ++i) {
        const UnitQuaternion q = sample_uniform_rotation(rng);
        points.push_back(VizPoint{q, density(viewpoint, q), "uniform"});
    }
    export_viz(points, out);

    json j;
    j["out"] = out;
    j["viewpoint"] = viewpoint;
    j["points"] = points.size();
    j["composition"] = {{"truth", 1}, {"model", n_model}, {"uniform", n_uniform}};
    std::cout << j.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SO(3) rotation-distribution models on the six-viewpoint toy task"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, baseline_path, modes_path, out_path;
    std::uint64_t seed = 17, sample_seed = 1;
    long n_samples = 40000;
    int viewpoint = 0, grid_m = 8192, threads = 1;
    long gen_samples = 0;

    auto* toy_gen = app.add_subcommand("toy-gen", "Generate a toy mode set (JSON lines)");
    toy_gen->add_option("--seed", seed, "mode-set seed");
    toy_gen->add_option("--out", out_path, "output path")->required();
    toy_gen->add_option("--samples", gen_samples, "also write this many samples");
    toy_gen->add_option("--sample-seed", sample_seed, "seed for the sample records");

    auto* train = app.add_subcommand("train", "Train a model from a TOML config");
    train->add_option("--config", config_path, "TOML run configuration")->required();
    train->add_option("--out", out_path, "checkpoint output path")->required();
    train->add_option("--modes", modes_path, "mode-set file (default: generate from config)");

    auto* eval = app.add_subcommand("eval", "Average log-likelihood on the evaluation set");
    eval->add_option("--checkpoint", checkpoint_path)->required();
    eval->add_option("--modes", modes_path);

    auto* sample = app.add_subcommand("sample", "Draw rotations and report sampling fidelity");
    sample->add_option("--checkpoint", checkpoint_path)->required();
    sample->add_option("--modes", modes_path);
    sample->add_option("--n", n_samples, "number of draws");
    sample->add_option("--seed", seed);
    sample->add_option("--out", out_path, "also write draws as JSON lines");
    sample->add_option("--threads", threads, "worker threads");

    auto* predict = app.add_subcommand("predict", "Greedy per-viewpoint predictions");
    predict->add_option("--checkpoint", checkpoint_path)->required();
    predict->add_option("--modes", modes_path);

    auto* bench = app.add_subcommand("bench", "Throughput and grid-scaling measurements");
    bench->add_option("--checkpoint", checkpoint_path)->required();
    bench->add_option("--baseline-checkpoint", baseline_path)->required();
    bench->add_option("--grid-size", grid_m, "baseline grid size M (also timed at 2M)");
    bench->add_option("--modes", modes_path, "fill in LL and prediction error");
    bench->add_option("--seed", seed);

    auto* viz = app.add_subcommand("export-viz", "CSV of rotations with log densities");
    viz->add_option("--checkpoint", checkpoint_path)->required();
    viz->add_option("--modes", modes_path);
    viz->add_option("--viewpoint", viewpoint)->required();
    viz->add_option("--n", n_samples, "total points (truth + model + uniform)");
    viz->add_option("--seed", seed);
    viz->add_option("--out", out_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (toy_gen->parsed()) return cmd_toy_gen(out_path, seed, gen_samples, sample_seed);
        if (train->parsed()) return cmd_train(config_path, out_path, modes_path);
        if (eval->parsed()) return cmd_eval(checkpoint_path, modes_path);
        if (sample->parsed()) {
            return cmd_sample(checkpoint_path, modes_path, n_samples, seed, out_path, threads);
        }
        if (predict->parsed()) return cmd_predict(checkpoint_path, modes_path);
        if (bench->parsed()) {
            return cmd_bench(checkpoint_path, baseline_path, grid_m, modes_path, seed);
        }
        if (viz->parsed()) {
            return cmd_export_viz(checkpoint_path, modes_path, viewpoint, n_samples, seed,
                                  out_path);
        }
    } catch (const std::exception& e) {
        json err;
        err["error"] = {{"type", "error"}, {"message", e.what()}};
        std::cout << err.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
