#include "aqmm/density.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace aqmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

}  // namespace

double component_density(double q_c, const MixtureProportions& pi,
                         double remaining_sq, const BinPartition& partition) {
    if (pi.size() != partition.size()) {
        throw std::invalid_argument("component_density: proportions size != bin count");
    }
    const double r = std::sqrt(std::max(0.0, remaining_sq));
    if (std::abs(q_c) > r) {
        throw std::invalid_argument("component_density: component outside the remaining budget");
    }
    const int k = partition.bin_of(q_c);
    const double omega = partition.constrained_width(k, remaining_sq);
    if (omega <= 0.0) return 0.0;
    return pi[k] / omega;
}

double dilution_log(const UnitQuaternion& q, const BinPartition& partition) {
    const QuaternionSentence s = partition.sentence_of(q);
    const double wy = partition.constrained_width(s.y, 1.0 - q.x() * q.x());
    const double wz = partition.constrained_width(s.z, 1.0 - q.x() * q.x() - q.y() * q.y());
    if (q.w() <= 0.0 || wy <= 0.0 || wz <= 0.0) return kNegInf;
    return std::log(partition.size() * q.w() / (2.0 * wy * wz));
}

double sentence_log_probability(const QuaternionSentence& sentence,
                                const MixtureProportions& pi_x,
                                const MixtureProportions& pi_y,
                                const MixtureProportions& pi_z) {
    const double px = pi_x[sentence.x];
    const double py = pi_y[sentence.y];
    const double pz = pi_z[sentence.z];
    if (px <= 0.0 || py <= 0.0 || pz <= 0.0) return kNegInf;
    return std::log(px) + std::log(py) + std::log(pz);
}

double full_log_density(const UnitQuaternion& q, const MixtureProportions& pi_x,
                        const MixtureProportions& pi_y, const MixtureProportions& pi_z,
                        const BinPartition& partition) {
    const double lm = sentence_log_probability(partition.sentence_of(q), pi_x, pi_y, pi_z);
    return lm + dilution_log(q, partition);
}

double language_model_nll(std::span<const DensityEvalItem> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("language_model_nll: empty batch");
    }
    double total = 0.0;
    for (const auto& item : batch) {
        total -= sentence_log_probability(item.sentence, item.pi_x, item.pi_y, item.pi_z);
    }
    return total / static_cast<double>(batch.size());
}

double mean_dilution_correction(std::span<const DensityEvalItem> batch,
                                const BinPartition& partition) {
    if (batch.empty()) {
        throw std::invalid_argument("mean_dilution_correction: empty batch");
    }
    double total = 0.0;
    for (const auto& item : batch) {
        total -= dilution_log(item.q, partition);
    }
    return total / static_cast<double>(batch.size());
}

double exact_nll(std::span<const DensityEvalItem> batch, const BinPartition& partition) {
    return language_model_nll(batch) + mean_dilution_correction(batch, partition);
}

double precision_lower_bound(int n_bins, double q_w) {
    const double n = static_cast<double>(n_bins);
    return n * n * n * q_w / 8.0;
}

double disk_to_hemisphere_density(double p_xy, double x, double y) {
    const double rr = x * x + y * y;
    if (rr >= 1.0) {
        throw std::invalid_argument("disk_to_hemisphere_density: point not strictly inside the disk");
    }
    return p_xy * std::sqrt(1.0 - rr);
}

HemisphereDemo hemisphere_density_demo(int n_points, int grid, Rng& rng) {
    if (n_points < 1 || grid < 1) {
        throw std::invalid_argument("hemisphere_density_demo: need n_points >= 1 and grid >= 1");
    }
    std::vector<double> xs(n_points), ys(n_points), zs(n_points);
    std::vector<int> cell(n_points);
    std::vector<long> counts(static_cast<std::size_t>(grid) * grid, 0);
    for (int i = 0; i < n_points; ++i) {
        double x, y, z, norm;
        do {
            x = rng.normal();
            y = rng.normal();
            z = rng.normal();
            norm = std::sqrt(x * x + y * y + z * z);
        } while (norm == 0.0);
        x /= norm;
        y /= norm;
        z = std::abs(z) / norm;
        const int ix = std::min(grid - 1, static_cast<int>((x + 1.0) / 2.0 * grid));
        const int iy = std::min(grid - 1, static_cast<int>((y + 1.0) / 2.0 * grid));
        xs[i] = x;
        ys[i] = y;
        zs[i] = z;
        cell[i] = ix * grid + iy;
        ++counts[cell[i]];
    }
    const double cell_area = 4.0 / (static_cast<double>(grid) * grid);
    double mean = 0.0;
    for (int i = 0; i < n_points; ++i) {
        const double p_xy = static_cast<double>(counts[cell[i]]) / (n_points * cell_area);
        mean += disk_to_hemisphere_density(p_xy, xs[i], ys[i]);
    }
    mean /= n_points;
    return HemisphereDemo{mean, 1.0 / (2.0 * kPi)};
}

double mog_s_of_q(double q_c, double u) {
    if (!(u > 0.0) || std::abs(q_c) >= u) {
        throw std::invalid_argument("mog_s_of_q: require -u < q_c < u with u > 0");
    }
    return std::log(q_c + u) - std::log(u - q_c);
}

double mog_q_of_s(double s, double u) {
    if (!(u > 0.0)) {
        throw std::invalid_argument("mog_q_of_s: require u > 0");
    }
    return u * std::tanh(0.5 * s);
}

double mog_dsdq(double q_c, double u) {
    if (!(u > 0.0) || std::abs(q_c) >= u) {
        throw std::invalid_argument("mog_dsdq: require -u < q_c < u with u > 0");
    }
    return 2.0 * u / (u * u - q_c * q_c);
}

double mog_log_density_s(double s, const MoGHeadOutput& head) {
    const int k = head.components();
    if (k < 1 || head.means.size() != k || head.log_scales.size() != k) {
        throw std::invalid_argument("mog_log_density_s: inconsistent head");
    }
    double max_term = kNegInf;
    Eigen::VectorXd terms(k);
    for (int i = 0; i < k; ++i) {
        const double w = head.weights[i];
        if (w <= 0.0) {
            terms[i] = kNegInf;
            continue;
        }
        const double sigma = std::exp(head.log_scales[i]);
        const double zed = (s - head.means[i]) / sigma;
        terms[i] = std::log(w) - 0.5 * zed * zed - head.log_scales[i] - kLogSqrt2Pi;
        max_term = std::max(max_term, terms[i]);
    }
    if (!std::isfinite(max_term)) return kNegInf;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += std::exp(terms[i] - max_term);
    return max_term + std::log(acc);
}

std::array<double, 3> mog_component_bounds(const UnitQuaternion& q) {
    const double ux = 1.0;
    const double uy = std::sqrt(std::max(0.0, 1.0 - q.x() * q.x()));
    const double uz = std::sqrt(std::max(0.0, 1.0 - q.x() * q.x() - q.y() * q.y()));
    return {ux, uy, uz};
}

double mog_full_log_density(const UnitQuaternion& q, const std::array<MoGHeadOutput, 3>& heads) {
    if (q.w() <= 0.0) return kNegInf;
    const std::array<double, 3> u = mog_component_bounds(q);
    const std::array<double, 3> comp = {q.x(), q.y(), q.z()};
    double total = std::log(q.w());
    for (int c = 0; c < 3; ++c) {
        if (!(u[c] > 0.0) || std::abs(comp[c]) >= u[c]) return kNegInf;
        const double s = mog_s_of_q(comp[c], u[c]);
        total += mog_log_density_s(s, heads[c]) + std::log(mog_dsdq(comp[c], u[c]));
    }
    return total;
}

}  // namespace aqmm
