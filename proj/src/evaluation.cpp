#include "aqmm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace aqmm {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

int nearest_mode(const UnitQuaternion& q, const std::vector<UnitQuaternion>& modes,
                 double* distance_out) {
    int best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (int m = 0; m < static_cast<int>(modes.size()); ++m) {
        const double d = geodesic_distance(q, modes[m]);
        if (d < best_distance) {
            best_distance = d;
            best = m;
        }
    }
    if (distance_out != nullptr) *distance_out = best_distance;
    return best;
}

}  // namespace

AverageLl average_ll(const LogDensityFn& model, const ToyModeSet& mode_set,
                     std::span<const EvalEntry> entries) {
    if (entries.empty()) throw std::invalid_argument("average_ll: empty evaluation set");
    AverageLl result;
    double total = 0.0;
    for (const EvalEntry& entry : entries) {
        const double ll = model(entry.viewpoint, mode_set.modes(entry.viewpoint)[entry.mode_index]);
        if (!std::isfinite(ll) && ll < 0.0) {
            result.neg_inf_entries.push_back(entry);
        }
        total += ll;
    }
    result.mean_ll = result.neg_inf_entries.empty()
                         ? total / static_cast<double>(entries.size())
                         : -std::numeric_limits<double>::infinity();
    return result;
}

SamplingReport sampling_report(const SampleFn& model, const ToyModeSet& mode_set,
                               const BinPartition& partition, long n_samples,
                               std::uint64_t seed, int threads) {
    if (n_samples < 1) throw std::invalid_argument("sampling_report: need n_samples >= 1");
    threads = std::max(1, threads);

    // Precomputed true sentences per viewpoint for the validity check.
    std::array<std::vector<QuaternionSentence>, 6> true_sentences;
    for (int v = 0; v < mode_set.viewpoints(); ++v) {
        for (const auto& q : mode_set.modes(v)) {
            true_sentences[v].push_back(partition.sentence_of(q));
        }
    }

    struct PerSample {
        int viewpoint;
        int mode;
        double distance_deg;
        bool valid;
    };
    std::vector<PerSample> rows(n_samples);

    const auto worker = [&](long begin, long end) {
        for (long i = begin; i < end; ++i) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
            const int viewpoint = static_cast<int>(rng.uniform_index(mode_set.viewpoints()));
            const UnitQuaternion q = model(viewpoint, rng);
            double distance = 0.0;
            const int mode = nearest_mode(q, mode_set.modes(viewpoint), &distance);
            const QuaternionSentence sentence = partition.sentence_of(q);
            bool valid = false;
            for (const auto& s : true_sentences[viewpoint]) {
                if (s == sentence) {
                    valid = true;
                    break;
                }
            }
            rows[i] = PerSample{viewpoint, mode, distance * kRadToDeg, valid};
        }
    };

    if (threads == 1) {
        worker(0, n_samples);
    } else {
        std::vector<std::thread> pool;
        const long chunk = (n_samples + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            const long begin = t * chunk;
            const long end = std::min<long>(n_samples, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    SamplingReport report;
    report.sample_count = n_samples;
    std::array<long, 6> per_viewpoint_draws{};
    std::array<std::vector<long>, 6> assigned;
    for (int v = 0; v < mode_set.viewpoints(); ++v) {
        assigned[v].assign(mode_set.mode_count(v), 0);
    }
    double distance_total = 0.0;
    for (const PerSample& row : rows) {
        ++per_viewpoint_draws[row.viewpoint];
        distance_total += row.distance_deg;
        report.max_assignment_deg = std::max(report.max_assignment_deg, row.distance_deg);
        if (row.valid) {
            ++assigned[row.viewpoint][row.mode];
        } else {
            ++report.invalid_count;
        }
    }
    report.mean_assignment_deg = distance_total / static_cast<double>(n_samples);
    report.invalid_rate = static_cast<double>(report.invalid_count) / n_samples;

    for (int v = 0; v < mode_set.viewpoints(); ++v) {
        const long draws = per_viewpoint_draws[v];
        const int modes = mode_set.mode_count(v);
        auto& proportions = report.mode_proportions[v];
        proportions.assign(modes, 0.0);
        if (draws == 0) continue;
        long valid_draws = 0;
        for (int m = 0; m < modes; ++m) {
            proportions[m] = static_cast<double>(assigned[v][m]) / draws;
            valid_draws += assigned[v][m];
        }
        if (valid_draws == 0) {
            report.tvd_to_uniform[v] = 1.0;
            continue;
        }
        double tvd = 0.0;
        for (int m = 0; m < modes; ++m) {
            const double p = static_cast<double>(assigned[v][m]) / valid_draws;
            tvd += std::abs(p - 1.0 / modes);
        }
        report.tvd_to_uniform[v] = tvd / 2.0;
    }
    return report;
}

PredictionError prediction_error(const PredictFn& model, const ToyModeSet& mode_set) {
    PredictionError result;
    double total = 0.0;
    for (int v = 0; v < mode_set.viewpoints(); ++v) {
        const UnitQuaternion prediction = model(v);
        double distance = 0.0;
        nearest_mode(prediction, mode_set.modes(v), &distance);
        result.per_viewpoint_deg[v] = distance * kRadToDeg;
        total += result.per_viewpoint_deg[v];
    }
    result.overall_deg = total / mode_set.viewpoints();
    return result;
}

namespace {

double time_once(const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count();
}

double median_of(std::vector<double>& times) {
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

}  // namespace

double measure_seconds(const std::function<void()>& fn, int repeats) {
    fn();  // warm caches before timing
    std::vector<double> times;
    times.reserve(repeats);
    for (int i = 0; i < repeats; ++i) times.push_back(time_once(fn));
    return median_of(times);
}

std::pair<double, double> measure_alternating(const std::function<void()>& a,
                                              const std::function<void()>& b, int repeats) {
    a();
    b();
    std::vector<double> ta, tb;
    ta.reserve(repeats);
    tb.reserve(repeats);
    for (int i = 0; i < repeats; ++i) {
        ta.push_back(time_once(a));
        tb.push_back(time_once(b));
    }
    return {median_of(ta), median_of(tb)};
}

ExperimentRecord throughput_bench(const ScorerParameters& model, const GridModel& baseline,
                                  int grid_m, const BenchConfig& config) {
    const auto start = std::chrono::steady_clock::now();

    const RotationGrid grid_small = RotationGrid::haar(grid_m, derive_seed(config.seed, 0));
    const RotationGrid grid_large = RotationGrid::haar(2 * grid_m, derive_seed(config.seed, 1));

    Rng query_rng(derive_seed(config.seed, 2));
    std::vector<std::pair<int, UnitQuaternion>> queries;
    queries.reserve(config.eval_queries);
    const int viewpoints = model.config().viewpoints;
    for (int i = 0; i < config.eval_queries; ++i) {
        queries.emplace_back(static_cast<int>(query_rng.uniform_index(viewpoints)),
                             sample_uniform_rotation(query_rng));
    }

    volatile double sink = 0.0;
    const auto model_eval = [&] {
        double acc = 0.0;
        for (const auto& [viewpoint, q] : queries) acc += log_density(model, viewpoint, q);
        sink = acc;
    };
    const auto baseline_eval = [&](const RotationGrid& grid) {
        double acc = 0.0;
        for (const auto& [viewpoint, q] : queries) {
            acc += grid_log_density(baseline, viewpoint, q, grid);
        }
        sink = acc;
    };

    ExperimentRecord record;
    record.seed = config.seed;
    // The "at M" and "at 2M" settings of each model are timed in
    // alternation so drift cancels out of the ratios.
    std::tie(record.model_eval_time_m, record.model_eval_time_2m) =
        measure_alternating(model_eval, model_eval, config.repeats);
    std::tie(record.baseline_eval_time_m, record.baseline_eval_time_2m) = measure_alternating(
        [&] { baseline_eval(grid_small); }, [&] { baseline_eval(grid_large); }, config.repeats);
    record.baseline_time_ratio = record.baseline_eval_time_2m / record.baseline_eval_time_m;
    record.model_time_ratio = record.model_eval_time_2m / record.model_eval_time_m;
    record.model_to_baseline_eval_ratio =
        record.baseline_eval_time_m / record.model_eval_time_m;

    const double sample_time = measure_seconds(
        [&] {
            Rng rng(derive_seed(config.seed, 3));
            for (int i = 0; i < config.samples; ++i) {
                sink = sample_quaternion(model, i % viewpoints, rng).first.w();
            }
        },
        config.repeats);
    const double predict_time = measure_seconds(
        [&] {
            for (int i = 0; i < config.predictions; ++i) {
                sink = predict_quaternion(model, i % viewpoints).w();
            }
        },
        config.repeats);

    record.throughput.evals_per_sec = config.eval_queries / record.model_eval_time_m;
    record.throughput.samples_per_sec = config.samples / sample_time;
    record.throughput.predictions_per_sec = config.predictions / predict_time;
    record.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    (void)sink;
    return record;
}

void export_viz(std::span<const VizPoint> points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_viz: cannot open " + path);
    out << "x,y,z,log_density,tag\n";
    char buf[160];
    for (const VizPoint& point : points) {
        const Vec3 rv = quat_to_rotation_vector(point.q);
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,", rv.x(), rv.y(), rv.z(),
                      point.log_density);
        out << buf << point.tag << "\n";
    }
    if (!out) throw std::runtime_error("export_viz: write failed for " + path);
}

}  // namespace aqmm
