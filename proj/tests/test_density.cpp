#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "aqmm/density.hpp"

using namespace aqmm;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Log density of the "uniform logits through the mask" model: every legal
// bin gets proportion 1/(legal count) at each step.
double uniform_masked_log_density(const UnitQuaternion& q, const BinPartition& p) {
    const QuaternionSentence s = p.sentence_of(q);
    const double c0 = p.size();
    const double c1 = p.legal_range(std::vector<int>{s.x}).count();
    const double c2 = p.legal_range(std::vector<int>{s.x, s.y}).count();
    return -std::log(c0) - std::log(c1) - std::log(c2) + dilution_log(q, p);
}

MixtureProportions unit_mass_at(int bin, int n) {
    MixtureProportions pi = MixtureProportions::Zero(n);
    pi[bin] = 1.0;
    return pi;
}

}  // namespace

TEST_CASE("component density") {
    const BinPartition p500(500);
    CHECK(component_density(0.0, unit_mass_at(250, 500), 1.0, p500) ==
          doctest::Approx(250.0).epsilon(1e-12));

    // Fig-3-style scenario: q_x = 0.7 leaves sqrt(0.51) of budget for q_y.
    const BinPartition p20(20);
    const double w = std::sqrt(0.51) - 0.7;
    CHECK(component_density(0.71, unit_mass_at(17, 20), 0.51, p20) ==
          doctest::Approx(1.0 / w).epsilon(1e-12));

    const MixtureProportions uniform = MixtureProportions::Constant(20, 1.0 / 20);
    CHECK(component_density(0.3, uniform, 1.0, p20) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(component_density(-0.99, uniform, 1.0, p20) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(component_density(0.9, uniform, 0.5, p20), std::invalid_argument);
}

TEST_CASE("full log density at the identity with concentrated proportions") {
    const BinPartition p(500);
    const UnitQuaternion identity;
    const MixtureProportions pi = unit_mass_at(250, 500);
    const double expected = std::log(500.0 / (2.0 * 0.004 * 0.004));  // 15,625,000
    const double value = full_log_density(identity, pi, pi, pi, p);
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(value == doctest::Approx(16.5644).epsilon(1e-4));

    // Zero dilution at the equator.
    const UnitQuaternion w0(1, 0, 0, 0);
    CHECK(full_log_density(w0, pi, pi, pi, p) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("full density factors as the projected density times q_w") {
    Rng rng(41);
    const BinPartition p(64);
    for (int t = 0; t < 500; ++t) {
        const UnitQuaternion q = sample_uniform_rotation(rng);
        MixtureProportions pi_x(64), pi_y(64), pi_z(64);
        for (int i = 0; i < 64; ++i) {
            pi_x[i] = rng.uniform(0.01, 1.0);
            pi_y[i] = rng.uniform(0.01, 1.0);
            pi_z[i] = rng.uniform(0.01, 1.0);
        }
        pi_x /= pi_x.sum();
        pi_y /= pi_y.sum();
        pi_z /= pi_z.sum();
        const double projected =
            component_density(q.x(), pi_x, 1.0, p) *
            component_density(q.y(), pi_y, 1.0 - q.x() * q.x(), p) *
            component_density(q.z(), pi_z, 1.0 - q.x() * q.x() - q.y() * q.y(), p);
        const double full = std::exp(full_log_density(q, pi_x, pi_y, pi_z, p));
        CHECK(full == doctest::Approx(projected * q.w()).epsilon(1e-12));

        // Dilution consistency, bit for bit: the full log density is the
        // sentence log-probability plus the dilution term.
        CHECK(full_log_density(q, pi_x, pi_y, pi_z, p) ==
              sentence_log_probability(p.sentence_of(q), pi_x, pi_y, pi_z) + dilution_log(q, p));
    }
}

TEST_CASE("masked-uniform model integrates to one over the hemisphere") {
    // Proportions parked on legal bins whose constrained width is zero are
    // lost (such draws are impossible), so the integral undershoots 1 by a
    // deficit that scales like 1/N: noticeable at N = 500, inside the 2%
    // normalization tolerance at the working precision N = 4096.
    Rng rng(43);
    const int n = 200000;
    {
        const BinPartition p(500);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += std::exp(uniform_masked_log_density(sample_uniform_rotation(rng), p));
        }
        const double integral = kPi * kPi * acc / n;
        CHECK(integral > 0.95);
        CHECK(integral < 1.005);
    }
    {
        const BinPartition p(4096);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += std::exp(uniform_masked_log_density(sample_uniform_rotation(rng), p));
        }
        const double integral = kPi * kPi * acc / n;
        CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("language model loss and the exact NLL split") {
    const BinPartition p(20);
    Rng rng(47);
    std::vector<DensityEvalItem> batch;
    for (int i = 0; i < 64; ++i) {
        DensityEvalItem item;
        item.q = sample_uniform_rotation(rng);
        item.sentence = p.sentence_of(item.q);
        item.pi_x = MixtureProportions(20);
        item.pi_y = MixtureProportions(20);
        item.pi_z = MixtureProportions(20);
        for (int k = 0; k < 20; ++k) {
            item.pi_x[k] = rng.uniform(0.01, 1.0);
            item.pi_y[k] = rng.uniform(0.01, 1.0);
            item.pi_z[k] = rng.uniform(0.01, 1.0);
        }
        item.pi_x /= item.pi_x.sum();
        item.pi_y /= item.pi_y.sum();
        item.pi_z /= item.pi_z.sum();
        batch.push_back(std::move(item));
    }

    // Perfectly concentrated proportions: zero classification loss.
    std::vector<DensityEvalItem> concentrated = batch;
    for (auto& item : concentrated) {
        item.pi_x = unit_mass_at(item.sentence.x, 20);
        item.pi_y = unit_mass_at(item.sentence.y, 20);
        item.pi_z = unit_mass_at(item.sentence.z, 20);
    }
    CHECK(language_model_nll(concentrated) == doctest::Approx(0.0));

    // Uniform proportions: cross-entropy 3 ln N.
    std::vector<DensityEvalItem> uniform = batch;
    for (auto& item : uniform) {
        item.pi_x = MixtureProportions::Constant(20, 1.0 / 20);
        item.pi_y = item.pi_x;
        item.pi_z = item.pi_x;
    }
    CHECK(language_model_nll(uniform) == doctest::Approx(3.0 * std::log(20.0)).epsilon(1e-12));

    // The exact NLL is the language-model loss plus the dilution correction.
    CHECK(exact_nll(batch, p) == language_model_nll(batch) + mean_dilution_correction(batch, p));
}

TEST_CASE("precision lower bound") {
    CHECK(precision_lower_bound(50257, 1.0) == doctest::Approx(1.5873e13).epsilon(1e-3));
    CHECK(50257.0 * 50257.0 * 50257.0 == doctest::Approx(1.26e14).epsilon(0.01));
    CHECK(precision_lower_bound(2, 0.73) == doctest::Approx(0.73));

    Rng rng(53);
    const BinPartition p(500);
    for (int t = 0; t < 5000; ++t) {
        const UnitQuaternion q = sample_uniform_rotation(rng);
        const double dil = dilution_log(q, p);
        if (!std::isfinite(dil)) continue;
        CHECK(std::exp(dil) >= precision_lower_bound(500, q.w()) * (1.0 - 1e-12));
    }
}

TEST_CASE("disk to hemisphere transform") {
    CHECK(disk_to_hemisphere_density(0.37, 0.0, 0.0) == doctest::Approx(0.37));
    CHECK(disk_to_hemisphere_density(1.0 / kPi, 0.6, 0.0) ==
          doctest::Approx(0.8 / kPi).epsilon(1e-12));
    CHECK_THROWS_AS(disk_to_hemisphere_density(1.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(disk_to_hemisphere_density(1.0, 0.8, 0.7), std::invalid_argument);

    Rng rng(59);
    const HemisphereDemo demo = hemisphere_density_demo(1000, 11, rng);
    CHECK(demo.expected_density == doctest::Approx(1.0 / (2.0 * kPi)));
    CHECK(demo.mean_transformed_density > 0.14);
    CHECK(demo.mean_transformed_density < 0.18);
}

TEST_CASE("score transform round trip and derivative") {
    CHECK(mog_s_of_q(0.0, 1.0) == 0.0);
    CHECK(mog_s_of_q(0.999999, 1.0) > 13.0);
    CHECK_THROWS_AS(mog_s_of_q(1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(mog_s_of_q(0.2, 0.1), std::invalid_argument);

    Rng rng(61);
    for (int t = 0; t < 10000; ++t) {
        const double u = rng.uniform(0.05, 1.0);
        const double q = rng.uniform(-0.999, 0.999) * u;
        const double s = mog_s_of_q(q, u);
        CHECK(std::abs(mog_q_of_s(s, u) - q) < 1e-9);
    }

    CHECK(mog_dsdq(0.0, 1.0) == doctest::Approx(2.0));
    for (int t = 0; t < 10000; ++t) {
        const double u = rng.uniform(0.1, 1.0);
        const double q = rng.uniform(-0.9, 0.9) * u;
        const double h = 1e-6 * u;
        const double fd = (mog_s_of_q(q + h, u) - mog_s_of_q(q - h, u)) / (2.0 * h);
        CHECK(mog_dsdq(q, u) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("mog full log density") {
    Rng rng(67);

    // Single sharp component centered on the sample: the density is the
    // Gaussian peak times the Jacobians times q_w.
    const UnitQuaternion q = sample_uniform_rotation(rng);
    const auto u = mog_component_bounds(q);
    std::array<MoGHeadOutput, 3> heads;
    const std::array<double, 3> comp = {q.x(), q.y(), q.z()};
    const double log_sigma = -6.0;
    double expected = std::log(q.w());
    for (int c = 0; c < 3; ++c) {
        heads[c].weights = Eigen::VectorXd::Ones(1);
        heads[c].means = Eigen::VectorXd::Constant(1, mog_s_of_q(comp[c], u[c]));
        heads[c].log_scales = Eigen::VectorXd::Constant(1, log_sigma);
        expected += -log_sigma - 0.5 * std::log(2.0 * kPi) + std::log(mog_dsdq(comp[c], u[c]));
    }
    CHECK(mog_full_log_density(q, heads) == doctest::Approx(expected).epsilon(1e-10));

    // Boundary convention.
    const UnitQuaternion equator(1, 0, 0, 0);
    CHECK(mog_full_log_density(equator, heads) == -std::numeric_limits<double>::infinity());

    // Normalization of a fixed random head under Haar sampling.
    std::array<MoGHeadOutput, 3> random_heads;
    for (int c = 0; c < 3; ++c) {
        const int k = 8;
        Eigen::VectorXd w(k), mu(k), ls(k);
        for (int i = 0; i < k; ++i) {
            w[i] = rng.uniform(0.1, 1.0);
            mu[i] = rng.uniform(-2.0, 2.0);
            ls[i] = rng.uniform(-0.7, 0.7);
        }
        random_heads[c] = MoGHeadOutput{w / w.sum(), mu, ls};
    }
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += std::exp(mog_full_log_density(sample_uniform_rotation(rng), random_heads));
    }
    CHECK(kPi * kPi * acc / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("mog change of variable matches pushed-forward samples") {
    // One component in s-space pushed through q = u tanh(s/2), compared to
    // the analytic density on a 50-bin histogram by total variation.
    Rng rng(71);
    const double u = 0.8;
    MoGHeadOutput head;
    head.weights = Eigen::VectorXd::Ones(2) * 0.5;
    head.means = (Eigen::VectorXd(2) << -1.0, 1.5).finished();
    head.log_scales = (Eigen::VectorXd(2) << 0.0, -0.5).finished();

    const int n = 100000;
    const int bins = 50;
    std::vector<double> counts(bins, 0.0);
    for (int i = 0; i < n; ++i) {
        const int k = rng.uniform() < 0.5 ? 0 : 1;
        const double s = head.means[k] + std::exp(head.log_scales[k]) * rng.normal();
        const double q = mog_q_of_s(s, u);
        const int bin = std::min(bins - 1, static_cast<int>((q + u) / (2.0 * u) * bins));
        counts[bin] += 1.0;
    }
    double tvd = 0.0;
    const double width = 2.0 * u / bins;
    for (int bin = 0; bin < bins; ++bin) {
        const double mid = -u + (bin + 0.5) * width;
        const double analytic =
            std::exp(mog_log_density_s(mog_s_of_q(mid, u), head)) * mog_dsdq(mid, u) * width;
        tvd += std::abs(counts[bin] / n - analytic);
    }
    CHECK(tvd / 2.0 <= 0.05);
}
