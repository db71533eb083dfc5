#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "aqmm/sampler.hpp"

using namespace aqmm;

namespace {

ScorerConfig small_config() {
    ScorerConfig c;
    c.n_bins = 32;
    c.penc_frequencies = 3;
    c.context_dim = 8;
    c.hidden1 = 12;
    c.hidden2 = 12;
    c.viewpoints = 6;
    return c;
}

// Memorize viewpoint 0's single mode with a few thousand Adam steps.
ScorerParameters overfit_single_mode(const ToyModeSet& ms, int n_bins) {
    ScorerConfig config = small_config();
    config.n_bins = n_bins;
    config.context_dim = 16;
    config.hidden1 = 32;
    config.hidden2 = 32;
    Rng rng(77);
    ScorerParameters params(config, rng);
    AdamState adam(params.flat().size(), AdamConfig{.lr = 1e-3});
    ToyBatch batch;
    for (int i = 0; i < 16; ++i) batch.samples.push_back(ToySample{0, ms.modes(0)[0]});
    for (int step = 0; step < 3000; ++step) training_step(params, adam, batch);
    return params;
}

}  // namespace

TEST_CASE("samples are unit quaternions inside their sentence cells") {
    const ToyModeSet ms = generate_mode_set(123);
    Rng init(7);
    const ScorerParameters params(small_config(), init);
    const BinPartition p(32);

    Rng rng(99);
    for (int t = 0; t < 2000; ++t) {
        const auto [q, trace] = sample_quaternion(params, t % 6, rng);
        const double norm_sq = q.x() * q.x() + q.y() * q.y() + q.z() * q.z() + q.w() * q.w();
        CHECK(std::abs(norm_sq - 1.0) <= 1e-9);
        CHECK(q.w() >= 0.0);
        CHECK(p.sentence_of(q) == trace.sentence);
        const std::array<double, 3> point = trace.accepted;
        for (int c = 0; c < 3; ++c) {
            CHECK(point[c] >= trace.cell_edges[c].first);
            CHECK(point[c] < trace.cell_edges[c].second);
            CHECK(trace.provisional[c] >= trace.cell_edges[c].first);
            CHECK(trace.provisional[c] < trace.cell_edges[c].second);
        }
        CHECK(point[0] * point[0] + point[1] * point[1] + point[2] * point[2] <= 1.0);
    }

    // Determinism under a fixed stream.
    Rng r1(5), r2(5);
    const auto [qa, ta] = sample_quaternion(params, 3, r1);
    const auto [qb, tb] = sample_quaternion(params, 3, r2);
    CHECK(qa == qb);
    CHECK(ta.sentence == tb.sentence);
}

TEST_CASE("an overfit single-mode model samples its sentence almost always") {
    const ToyModeSet ms = generate_mode_set(123);
    const ScorerParameters params = overfit_single_mode(ms, 64);
    const BinPartition p(64);
    const QuaternionSentence target = p.sentence_of(ms.modes(0)[0]);

    Rng rng(11);
    int hits = 0;
    const int n = 1000;
    for (int t = 0; t < n; ++t) {
        const auto [q, trace] = sample_quaternion(params, 0, rng);
        if (trace.sentence == target) ++hits;
    }
    CHECK(hits >= static_cast<int>(0.99 * n));

    // Sampled log densities hover near the mode's log density.
    double mean_ld = 0.0;
    Rng rng2(13);
    for (int t = 0; t < 200; ++t) {
        mean_ld += log_density(params, 0, sample_quaternion(params, 0, rng2).first);
    }
    mean_ld /= 200;
    const double at_mode = log_density(params, 0, ms.modes(0)[0]);
    CHECK(std::abs(mean_ld - at_mode) < std::log(1.3));
}

TEST_CASE("greedy prediction is deterministic and ties break to the lowest bin") {
    const ToyModeSet ms = generate_mode_set(123);
    Rng init(7);
    const ScorerParameters params(small_config(), init);

    const UnitQuaternion a = predict_quaternion(params, 1);
    const UnitQuaternion b = predict_quaternion(params, 1);
    CHECK(a == b);

    // All-zero parameters give exactly tied logits everywhere, so every
    // step must take the lowest legal bin. Walk the same rule through the
    // partition primitives, normalize (the midpoints leave the unit ball),
    // and compare against the prediction.
    ScorerParameters zero(small_config(), Eigen::VectorXd::Zero(small_config().parameter_count()));
    const BinPartition p(32);
    const int b0 = 0;
    const int b1 = p.legal_range(std::vector<int>{b0}).lo;
    const int b2 = p.legal_range(std::vector<int>{b0, b1}).lo;
    Eigen::Vector3d mids(p.midpoint(b0), p.midpoint(b1), p.midpoint(b2));
    CHECK(mids.norm() > 1.0);
    mids /= mids.norm();
    const UnitQuaternion expected =
        canonicalize(mids.x(), mids.y(), mids.z(),
                     std::sqrt(std::max(0.0, 1.0 - mids.squaredNorm())));
    const UnitQuaternion z = predict_quaternion(zero, 0);
    CHECK(geodesic_distance(z, expected) < 1e-12);

    // The prediction from an overfit model lands within the cell diagonal
    // of the memorized mode.
    const ScorerParameters trained = overfit_single_mode(ms, 64);
    const BinPartition p64(64);
    const UnitQuaternion predicted = predict_quaternion(trained, 0);
    const UnitQuaternion mode = ms.modes(0)[0];
    // Bin midpoints are within half a bin of the mode's components; the
    // geodesic error is bounded by a few cell diagonals.
    CHECK(geodesic_distance(predicted, mode) < 6.0 * (2.0 / 64));
}

TEST_CASE("log density: exactness, -inf conventions") {
    const ToyModeSet ms = generate_mode_set(123);
    Rng init(7);
    const ScorerParameters params(small_config(), init);
    const BinPartition p(32);

    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
        const UnitQuaternion q = sample_uniform_rotation(rng);
        const double ld = log_density(params, 2, q);
        // Matches the density module applied to the three masked softmaxes.
        const QuaternionSentence s = p.sentence_of(q);
        const std::array<double, 3> prev = {q.x(), q.y(), q.z()};
        double lm = 0.0;
        for (int step = 0; step < 3; ++step) {
            const Eigen::VectorXd logits =
                score_step(params, 2, step, std::span<const double>(prev.data(), step));
            std::vector<int> prefix(prev.begin(), prev.begin() + 0);
            LegalityMask mask;
            if (step == 0) {
                mask = p.strictly_illegal_mask({});
            } else if (step == 1) {
                mask = p.strictly_illegal_mask(std::vector<int>{s.x});
            } else {
                mask = p.strictly_illegal_mask(std::vector<int>{s.x, s.y});
            }
            lm += masked_log_probs(logits, mask)[s.label(step)];
        }
        CHECK(ld == doctest::Approx(lm + dilution_log(q, p)).epsilon(1e-12));
    }

    // Equator quaternions have zero dilution.
    CHECK(log_density(params, 0, UnitQuaternion(1, 0, 0, 0)) ==
          -std::numeric_limits<double>::infinity());

    // The batched sentence log-probability path agrees with the decode path.
    ToyBatch batch;
    for (int t = 0; t < 64; ++t) {
        batch.samples.push_back(ToySample{t % 6, sample_uniform_rotation(rng)});
    }
    const Eigen::VectorXd lm = batch_sentence_log_probs(params, batch);
    for (int t = 0; t < 64; ++t) {
        const ToySample& s = batch.samples[t];
        const double direct = log_density(params, s.viewpoint, s.q) - dilution_log(s.q, p);
        CHECK(lm[t] == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("conditioning cache is bit-identical and version-checked") {
    const ToyModeSet ms = generate_mode_set(123);
    Rng init(7);
    ScorerParameters params(small_config(), init);

    const ConditioningCache cache = make_conditioning_cache(params, 4);
    CHECK(predict_quaternion(params, 4) == predict_quaternion(params, cache));

    Rng r1(21), r2(21);
    CHECK(sample_quaternion(params, 4, r1).first == sample_quaternion(params, cache, r2).first);

    Rng qrng(23);
    const UnitQuaternion q = sample_uniform_rotation(qrng);
    CHECK(log_density(params, 4, q) == log_density(params, cache, q));

    // Mutating the parameters invalidates the cache.
    AdamState adam(params.flat().size(), AdamConfig{.lr = 1e-3});
    ToyBatch batch;
    batch.samples.push_back(ToySample{0, ms.modes(0)[0]});
    training_step(params, adam, batch);
    CHECK_THROWS_AS(predict_quaternion(params, cache), std::invalid_argument);
    CHECK_THROWS_AS(make_conditioning_cache(params, 6), std::invalid_argument);
}

TEST_CASE("step-0 bin frequencies match the masked softmax (chi-square)") {
    Rng init(7);
    const ScorerParameters params(small_config(), init);
    const int n_bins = 32;

    const Eigen::VectorXd logits = score_step(params, 0, 0, {});
    const Eigen::VectorXd lp = masked_log_probs(logits, LegalRange{0, n_bins - 1});

    const long n = 100000;
    std::vector<long> counts(n_bins, 0);
    Rng rng(31);
    for (long i = 0; i < n; ++i) {
        ++counts[sample_quaternion(params, 0, rng).second.sentence.x];
    }
    double chi_sq = 0.0;
    for (int i = 0; i < n_bins; ++i) {
        const double expected = std::exp(lp[i]) * n;
        chi_sq += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    // Wilson-Hilferty upper quantile at alpha = 0.001, df = 31.
    const double df = n_bins - 1;
    const double z = 3.0902;  // Phi^{-1}(0.999)
    const double threshold = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(chi_sq < threshold);
}

TEST_CASE("mog density evaluation and debug sampling") {
    Rng init(41);
    ScorerConfig config = small_config();
    config.head = HeadKind::mog;
    config.mog_components = 6;
    const ScorerParameters params(config, init);

    Rng rng(43);
    const UnitQuaternion q = sample_uniform_rotation(rng);
    const double ld = mog_log_density(params, 0, q);
    CHECK(std::isfinite(ld));
    CHECK(mog_log_density(params, 0, UnitQuaternion(1, 0, 0, 0)) ==
          -std::numeric_limits<double>::infinity());

    for (int t = 0; t < 100; ++t) {
        const UnitQuaternion sample = debug_sample_mog(params, t % 6, rng);
        const double norm_sq = sample.x() * sample.x() + sample.y() * sample.y() +
                               sample.z() * sample.z() + sample.w() * sample.w();
        CHECK(std::abs(norm_sq - 1.0) <= 1e-9);
    }
}
