#include <cmath>
#include <vector>

#include <doctest.h>

#include "aqmm/grid_baseline.hpp"

using namespace aqmm;

namespace {

constexpr double kPiSq = 9.86960440108935861883;

GridModelConfig small_grid_config() {
    GridModelConfig c;
    c.context_dim = 12;
    c.hidden = 16;
    c.penc_frequencies = 3;
    c.viewpoints = 6;
    return c;
}

}  // namespace

TEST_CASE("theoretical maximum log-likelihood of a grid") {
    CHECK(theoretical_max_ll(2359296) == doctest::Approx(12.38).epsilon(0.0009));

    // Matching 27.12 nats needs a grid in the trillions.
    const double m_for_2712 = kPiSq * std::exp(27.12);
    CHECK(m_for_2712 > 5.5e12);
    CHECK(m_for_2712 < 6.5e12);
    CHECK(std::abs(theoretical_max_ll(static_cast<std::int64_t>(m_for_2712)) - 27.12) < 1e-6);

    // Consistency: exp(max_ll) * pi^2 recovers the cell count.
    CHECK(std::exp(theoretical_max_ll(4096)) * kPiSq == doctest::Approx(4096.0).epsilon(1e-12));
    CHECK_THROWS(theoretical_max_ll(0));
}

TEST_CASE("haar grids are seeded and carry volume pi^2 / M") {
    const RotationGrid a = RotationGrid::haar(128, 5);
    const RotationGrid b = RotationGrid::haar(128, 5);
    const RotationGrid c = RotationGrid::haar(128, 6);
    CHECK(a.size() == 128);
    CHECK(a.cell_volume() == doctest::Approx(kPiSq / 128));
    CHECK(a.cells[17] == b.cells[17]);
    CHECK(geodesic_distance(a.cells[17], c.cells[17]) > 1e-6);
    CHECK_THROWS(RotationGrid::haar(1, 5));
}

TEST_CASE("a constant-score model is the uniform density") {
    const GridModelConfig config = small_grid_config();
    GridModel zero(config, Eigen::VectorXd::Zero(config.parameter_count()));
    const RotationGrid grid = RotationGrid::haar(512, 11);
    Rng rng(13);
    for (int t = 0; t < 20; ++t) {
        const double ll = grid_log_density(zero, t % 6, sample_uniform_rotation(rng), grid);
        CHECK(ll == doctest::Approx(-std::log(kPiSq)).epsilon(1e-9));
    }
}

TEST_CASE("grid density never exceeds the cell ceiling") {
    Rng init(17);
    const GridModel model(small_grid_config(), init);
    const RotationGrid grid = RotationGrid::haar(256, 19);
    Rng rng(23);
    for (int t = 0; t < 200; ++t) {
        const double ll = grid_log_density(model, t % 6, sample_uniform_rotation(rng), grid);
        CHECK(ll <= theoretical_max_ll(grid.size() + 1) + 1e-12);
    }
}

TEST_CASE("grid batch loss gradient matches finite differences") {
    const ToyModeSet ms = generate_mode_set(321);
    Rng init(29);
    GridModel model(small_grid_config(), init);

    std::vector<ToySample> samples;
    ToySampleStream stream(ms, 31);
    for (int i = 0; i < 6; ++i) samples.push_back(stream.next());
    std::vector<UnitQuaternion> negatives;
    Rng neg_rng(37);
    for (int i = 0; i < 15; ++i) negatives.push_back(sample_uniform_rotation(neg_rng));

    Eigen::VectorXd grad;
    const double loss = grid_batch_loss(model, samples, negatives, &grad);
    CHECK(std::isfinite(loss));

    Rng pick(41);
    const double eps = 1e-4;
    for (int t = 0; t < 200; ++t) {
        const auto i = static_cast<Eigen::Index>(pick.uniform_index(model.flat().size()));
        GridModel probe(model.config(), model.flat());
        probe.mutable_flat()[i] += eps;
        const double up = grid_batch_loss(probe, samples, negatives, nullptr);
        probe.mutable_flat()[i] -= 2.0 * eps;
        const double down = grid_batch_loss(probe, samples, negatives, nullptr);
        const double fd = (up - down) / (2.0 * eps);
        const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        CHECK(rel <= 1e-3);
    }
}

TEST_CASE("training ranks the true rotation above fresh negatives") {
    const ToyModeSet ms = generate_mode_set(321);
    GridTrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 32;
    tc.n_train = 64;
    tc.epoch_samples = 2048;
    tc.max_epochs = 8;
    tc.val_samples = 256;

    const GridTrainResult result = train_grid_model(ms, small_grid_config(), tc, 4321);
    const GridTrainResult again = train_grid_model(ms, small_grid_config(), tc, 4321);
    CHECK(result.model.flat() == again.model.flat());
    CHECK(result.best_val_nll == again.best_val_nll);
    CHECK(result.best_val_nll < result.epochs.front().val_nll);

    // Overfit check on the single-mode viewpoint: the true rotation beats
    // fresh negatives nearly always.
    Rng rng(43);
    int wins = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        std::vector<UnitQuaternion> candidates;
        candidates.push_back(ms.modes(0)[0]);
        for (int j = 0; j < 63; ++j) candidates.push_back(sample_uniform_rotation(rng));
        const Eigen::VectorXd scores = result.model.score_batch(0, candidates);
        int best = 0;
        for (int j = 1; j < scores.size(); ++j) {
            if (scores[j] > scores[best]) best = j;
        }
        if (best == 0) ++wins;
    }
    CHECK(wins >= static_cast<int>(0.99 * trials));
}

TEST_CASE("grid sampling is categorical over the softmax") {
    Rng init(47);
    const GridModel model(small_grid_config(), init);
    const RotationGrid grid = RotationGrid::haar(64, 53);

    Rng r1(59), r2(59);
    CHECK(sample_from_grid(model, 2, grid, r1) == sample_from_grid(model, 2, grid, r2));

    // Frequencies against the softmax, chi-square at alpha = 0.001.
    const Eigen::VectorXd scores = model.score_batch(2, grid.cells);
    Eigen::ArrayXd probs = (scores.array() - scores.maxCoeff()).exp();
    probs /= probs.sum();

    const GridSampler sampler(model, 2, grid);
    std::vector<long> counts(grid.size(), 0);
    const long n = 100000;
    Rng rng(61);
    for (long i = 0; i < n; ++i) {
        const UnitQuaternion q = sampler.draw(rng);
        for (int j = 0; j < grid.size(); ++j) {
            if (grid.cells[j] == q) {
                ++counts[j];
                break;
            }
        }
    }
    double chi_sq = 0.0;
    for (int j = 0; j < grid.size(); ++j) {
        const double expected = probs[j] * n;
        chi_sq += (counts[j] - expected) * (counts[j] - expected) / expected;
    }
    const double df = grid.size() - 1;
    const double z = 3.0902;
    const double threshold =
        df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(chi_sq < threshold);
}
