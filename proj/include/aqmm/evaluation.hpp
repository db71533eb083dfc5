#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "aqmm/binning.hpp"
#include "aqmm/grid_baseline.hpp"
#include "aqmm/sampler.hpp"
#include "aqmm/toy_dataset.hpp"

namespace aqmm {

using LogDensityFn = std::function<double(int viewpoint, const UnitQuaternion& q)>;
using SampleFn = std::function<UnitQuaternion(int viewpoint, Rng& rng)>;
using PredictFn = std::function<UnitQuaternion(int viewpoint)>;

struct AverageLl {
    double mean_ll = 0.0;  // -inf when any entry is -inf
    std::vector<EvalEntry> neg_inf_entries;
};

// Unweighted mean log density over the replicated evaluation set.
AverageLl average_ll(const LogDensityFn& model, const ToyModeSet& mode_set,
                     std::span<const EvalEntry> entries);

struct SamplingReport {
    // Fraction of a viewpoint's draws assigned (by nearest geodesic mode)
    // to each mode, counting valid draws only; sums to <= 1 per viewpoint.
    std::array<std::vector<double>, 6> mode_proportions;
    // Total variation between the valid draws' mode distribution and uniform.
    std::array<double, 6> tvd_to_uniform{};
    double mean_assignment_deg = 0.0;  // over all draws
    double max_assignment_deg = 0.0;
    long invalid_count = 0;  // sentence matches no true mode of the viewpoint
    double invalid_rate = 0.0;
    long sample_count = 0;
};

// Draws viewpoints uniformly, samples the model, assigns each draw to the
// nearest true mode, and checks sentence-level validity. Per-draw seeds are
// derived from the base seed, so the report is independent of threading.
SamplingReport sampling_report(const SampleFn& model, const ToyModeSet& mode_set,
                               const BinPartition& partition, long n_samples,
                               std::uint64_t seed, int threads = 1);

struct PredictionError {
    std::array<double, 6> per_viewpoint_deg{};
    double overall_deg = 0.0;
};

// Geodesic distance between the greedy prediction and the nearest true mode.
PredictionError prediction_error(const PredictFn& model, const ToyModeSet& mode_set);

struct ThroughputSample {
    double evals_per_sec = 0.0;
    double samples_per_sec = 0.0;
    double predictions_per_sec = 0.0;
};

struct ExperimentRecord {
    std::string model_kind;
    std::string config_digest;
    std::uint64_t seed = 0;
    double average_ll = 0.0;
    double mean_prediction_error_deg = 0.0;
    ThroughputSample throughput;
    double wall_clock_sec = 0.0;

    // Grid-scaling study: baseline evaluated at grid sizes m and 2m, the
    // model at the same two settings (it has no grid, so the ratio ~ 1).
    double baseline_eval_time_m = 0.0;
    double baseline_eval_time_2m = 0.0;
    double model_eval_time_m = 0.0;
    double model_eval_time_2m = 0.0;
    double baseline_time_ratio = 0.0;  // time(2m) / time(m)
    double model_time_ratio = 0.0;
    double model_to_baseline_eval_ratio = 0.0;  // informational
};

// Median-of-repeats wall time of fn(), in seconds.
double measure_seconds(const std::function<void()>& fn, int repeats = 5);

// Alternating median timings of two workloads, warmed up first. Running
// a() and b() back to back each round makes slow drift (frequency, memory
// pressure) hit both sides equally, which is what ratio comparisons need.
std::pair<double, double> measure_alternating(const std::function<void()>& a,
                                              const std::function<void()>& b, int repeats = 7);

struct BenchConfig {
    int eval_queries = 512;  // density queries per timing run
    int samples = 256;       // draws per timing run
    int predictions = 256;
    int repeats = 7;
    std::uint64_t seed = 5;
};

// Times density evaluation for the model and the grid baseline at grid
// sizes m and 2m (same query set throughout), plus the model's sampling and
// prediction throughput. The baseline's cost scans the grid, so its time
// should double; the model never touches the grid.
ExperimentRecord throughput_bench(const ScorerParameters& model, const GridModel& baseline,
                                  int grid_m, const BenchConfig& config);

struct VizPoint {
    UnitQuaternion q;
    double log_density = 0.0;
    std::string tag;
};

// CSV with header x,y,z,log_density,tag; rows are rotation-vector
// coordinates. Throws on I/O failure.
void export_viz(std::span<const VizPoint> points, const std::string& path);

}  // namespace aqmm
