#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

#include "aqmm/binning.hpp"
#include "aqmm/quaternion.hpp"
#include "aqmm/random.hpp"

namespace aqmm {

// Mixture proportions over the N bins of one autoregressive step;
// non-negative, summing to 1, zero on strictly illegal bins.
using MixtureProportions = Eigen::VectorXd;

// Parameters of the score-space mixture of Gaussians for one component.
struct MoGHeadOutput {
    Eigen::VectorXd weights;     // non-negative, sum 1
    Eigen::VectorXd means;
    Eigen::VectorXd log_scales;  // scale = exp(log_scale)

    int components() const { return static_cast<int>(weights.size()); }
};

// Density of a single projected component: pi_k / omega_k with k the bin of
// q_c and omega_k the bin width clipped to the remaining unit-norm budget.
// Returns 0 when the clipped width vanishes.
double component_density(double q_c, const MixtureProportions& pi,
                         double remaining_sq, const BinPartition& partition);

// ln(N q_w / (2 omega_y omega_z)): the Jacobian dilution q_w plus the
// uniform-bin widths for the given quaternion's bins. -inf when q_w or a
// width vanishes.
double dilution_log(const UnitQuaternion& q, const BinPartition& partition);

// ln pi_x[k_x] + ln pi_y[k_y] + ln pi_z[k_z], -inf on zero proportions.
double sentence_log_probability(const QuaternionSentence& sentence,
                                const MixtureProportions& pi_x,
                                const MixtureProportions& pi_y,
                                const MixtureProportions& pi_z);

// Log of the full density on the canonical hemisphere:
// sentence log-probability plus dilution_log. -inf when any factor vanishes.
double full_log_density(const UnitQuaternion& q, const MixtureProportions& pi_x,
                        const MixtureProportions& pi_y, const MixtureProportions& pi_z,
                        const BinPartition& partition);

struct DensityEvalItem {
    MixtureProportions pi_x, pi_y, pi_z;
    QuaternionSentence sentence;
    UnitQuaternion q;
};

// Mean over the batch of -(ln pi_x[l_x] + ln pi_y[l_y] + ln pi_z[l_z]):
// the three-token language-model loss.
double language_model_nll(std::span<const DensityEvalItem> batch);

// Mean over the batch of -dilution_log(q); language_model_nll plus this is
// the exact negative log-likelihood.
double mean_dilution_correction(std::span<const DensityEvalItem> batch,
                                const BinPartition& partition);

double exact_nll(std::span<const DensityEvalItem> batch, const BinPartition& partition);

// N^3 q_w / 8, the lower bound on the dilution factor N q_w/(2 w_y w_z).
double precision_lower_bound(int n_bins, double q_w);

// Density transport from the unit disk to the unit hemisphere:
// p(x, y, z) = p(x, y) * z with z = sqrt(1 - x^2 - y^2).
// Throws for points on or outside the disk boundary.
double disk_to_hemisphere_density(double p_xy, double x, double y);

struct HemisphereDemo {
    double mean_transformed_density;  // mean of histogram density * z over the draws
    double expected_density;          // 1 / (2 pi)
};

// Uniform-hemisphere demonstration of the Jacobian transform: n points are
// drawn uniformly on the z > 0 hemisphere, their disk density is estimated
// with a grid x grid histogram over [-1,1]^2, and the transformed densities
// are averaged.
HemisphereDemo hemisphere_density_demo(int n_points, int grid, Rng& rng);

// Score-space coordinate of a bounded component: s = ln(q_c + u) - ln(u - q_c).
// Throws unless -u < q_c < u.
double mog_s_of_q(double q_c, double u);

// Inverse of mog_s_of_q: q_c = u * tanh(s / 2).
double mog_q_of_s(double s, double u);

// ds/dq = 2u / (u^2 - q_c^2). Throws unless -u < q_c < u.
double mog_dsdq(double q_c, double u);

// Log-density of the mixture of Gaussians at score s.
double mog_log_density_s(double s, const MoGHeadOutput& head);

// Per-component bounds for the score transform: u_x = 1,
// u_y = sqrt(1 - q_x^2), u_z = sqrt(1 - q_x^2 - q_y^2).
std::array<double, 3> mog_component_bounds(const UnitQuaternion& q);

// Full mixture-of-Gaussians density on the hemisphere: per-component MoG
// density at s(q_c) times |ds/dq|, product over components, times q_w.
// Boundary inputs (|q_c| >= u_c or q_w = 0) give -inf.
double mog_full_log_density(const UnitQuaternion& q, const std::array<MoGHeadOutput, 3>& heads);

}  // namespace aqmm
