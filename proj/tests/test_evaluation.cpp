#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "aqmm/density.hpp"
#include "aqmm/evaluation.hpp"

using namespace aqmm;

namespace {

constexpr double kPiSq = 9.86960440108935861883;

// The analytically optimal density: mass (shared sentences)/2^i per mode,
// exact within the bin cell.
LogDensityFn oracle_model(const ToyModeSet& ms, const BinPartition& p) {
    return [&ms, &p](int viewpoint, const UnitQuaternion& q) {
        const QuaternionSentence s = p.sentence_of(q);
        int shared = 0;
        for (const auto& mode : ms.modes(viewpoint)) {
            if (p.sentence_of(mode) == s) ++shared;
        }
        if (shared == 0) return -std::numeric_limits<double>::infinity();
        return std::log(static_cast<double>(shared) / ms.mode_count(viewpoint)) +
               dilution_log(q, p);
    };
}

}  // namespace

TEST_CASE("average log-likelihood") {
    const ToyModeSet ms = generate_mode_set(64);
    const BinPartition p(4096);
    const std::vector<EvalEntry> entries = evaluation_set(ms);

    // The synthetic oracle model reproduces theoretical_optimal_ll.
    const AverageLl on_oracle = average_ll(oracle_model(ms, p), ms, entries);
    CHECK(on_oracle.neg_inf_entries.empty());
    CHECK(on_oracle.mean_ll ==
          doctest::Approx(theoretical_optimal_ll(ms, p).total).epsilon(1e-12));

    // The uniform density scores -ln pi^2 everywhere.
    const AverageLl on_uniform = average_ll(
        [](int, const UnitQuaternion&) { return -std::log(kPiSq); }, ms, entries);
    CHECK(on_uniform.mean_ll == doctest::Approx(-2.2895).epsilon(1e-4));

    // -inf entries are reported.
    const AverageLl broken = average_ll(
        [](int viewpoint, const UnitQuaternion&) {
            return viewpoint == 3 ? -std::numeric_limits<double>::infinity() : 0.0;
        },
        ms, entries);
    CHECK(broken.mean_ll == -std::numeric_limits<double>::infinity());
    CHECK(broken.neg_inf_entries.size() == 32);
}

TEST_CASE("sampling report on a perfect synthetic sampler") {
    const ToyModeSet ms = generate_mode_set(64);
    const BinPartition p(4096);

    const SampleFn perfect = [&ms](int viewpoint, Rng& rng) {
        const auto& modes = ms.modes(viewpoint);
        return modes[rng.uniform_index(modes.size())];
    };

    const SamplingReport report = sampling_report(perfect, ms, p, 30000, 97);
    CHECK(report.sample_count == 30000);
    CHECK(report.invalid_count == 0);
    CHECK(report.invalid_rate == 0.0);
    CHECK(report.mean_assignment_deg == 0.0);
    CHECK(report.max_assignment_deg == 0.0);
    for (int v = 0; v < 6; ++v) {
        CHECK(report.tvd_to_uniform[v] < 0.05);
        double sum = 0.0;
        for (double prop : report.mode_proportions[v]) sum += prop;
        CHECK(sum == doctest::Approx(1.0));
    }

    // Deterministic, and indifferent to the thread count.
    const SamplingReport again = sampling_report(perfect, ms, p, 30000, 97);
    const SamplingReport threaded = sampling_report(perfect, ms, p, 30000, 97, 2);
    CHECK(report.mean_assignment_deg == again.mean_assignment_deg);
    CHECK(report.invalid_count == threaded.invalid_count);
    CHECK(report.mode_proportions[5] == threaded.mode_proportions[5]);

    // A sampler that misses the sentence is all-invalid.
    const SampleFn off = [&ms, &p](int viewpoint, Rng&) {
        // Shift the mode's q_x by two bins: never a true sentence.
        const UnitQuaternion& m = ms.modes(viewpoint)[0];
        const double shifted = m.x() + 2.0 * p.width() * (m.x() < 0 ? 1.0 : -1.0);
        const double q_w = std::sqrt(std::max(
            0.0, 1.0 - shifted * shifted - m.y() * m.y() - m.z() * m.z()));
        return canonicalize(shifted, m.y(), m.z(), q_w);
    };
    const SamplingReport bad = sampling_report(off, ms, p, 600, 13);
    CHECK(bad.invalid_rate == 1.0);
    CHECK(bad.mean_assignment_deg > 0.0);
}

TEST_CASE("prediction error") {
    const ToyModeSet ms = generate_mode_set(64);

    const PredictionError perfect =
        prediction_error([&ms](int viewpoint) { return ms.modes(viewpoint)[0]; }, ms);
    CHECK(perfect.overall_deg == 0.0);

    // Identity predictions: error equals the distance to the nearest mode.
    const PredictionError identity =
        prediction_error([](int) { return UnitQuaternion(); }, ms);
    for (int v = 0; v < 6; ++v) {
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& m : ms.modes(v)) {
            nearest = std::min(nearest, geodesic_distance(UnitQuaternion(), m));
        }
        CHECK(identity.per_viewpoint_deg[v] ==
              doctest::Approx(nearest * 180.0 / 3.14159265358979323846));
    }
}

TEST_CASE("viz export writes rotation vectors with tags") {
    std::vector<VizPoint> points;
    points.push_back(VizPoint{UnitQuaternion(), -1.5, "truth"});
    Rng rng(7);
    for (int i = 0; i < 99; ++i) {
        points.push_back(VizPoint{sample_uniform_rotation(rng), 0.25, "uniform"});
    }
    const std::string path = "viz_test.csv";
    export_viz(points, path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "x,y,z,log_density,tag");
    long rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::istringstream ss(line);
        std::string x, y, z, ld, tag;
        std::getline(ss, x, ',');
        std::getline(ss, y, ',');
        std::getline(ss, z, ',');
        std::getline(ss, ld, ',');
        std::getline(ss, tag, ',');
        const double vx = std::stod(x), vy = std::stod(y), vz = std::stod(z);
        CHECK(std::sqrt(vx * vx + vy * vy + vz * vz) <= 3.14159265358979323846 + 1e-9);
        if (rows == 1) {
            CHECK(vx == 0.0);
            CHECK(vy == 0.0);
            CHECK(vz == 0.0);
            CHECK(tag == "truth");
        }
    }
    CHECK(rows == 100);
    std::remove(path.c_str());
}
