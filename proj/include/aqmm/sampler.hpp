#pragma once

#include <array>
#include <utility>

#include "aqmm/scorer.hpp"

namespace aqmm {

// Everything observed while drawing one quaternion: the sampled sentence,
// the provisional in-bin draws that conditioned later steps, the cell the
// rejection sampler ran over, the accepted point, and how many proposals
// were rejected.
struct SampleTrace {
    QuaternionSentence sentence;
    std::array<double, 3> provisional{};                  // q_c_hats
    std::array<std::pair<double, double>, 3> cell_edges{};
    std::array<double, 3> accepted{};
    long rejections = 0;
};

// Viewpoint conditioning computed once and reused across the three decode
// steps. Tied to the parameter version it was built from.
struct ConditioningCache {
    int viewpoint = -1;
    std::uint64_t params_version = 0;
    Eigen::VectorXd context;
};

ConditioningCache make_conditioning_cache(const ScorerParameters& params, int viewpoint);

// Draws three bins from the masked step distributions, conditions each step
// on a uniform draw inside the previous bins, then rejection-samples the
// final point uniformly from the cell intersected with the unit ball.
// Throws after 10^6 rejected proposals (degenerate boundary cell).
std::pair<UnitQuaternion, SampleTrace> sample_quaternion(const ScorerParameters& params,
                                                         int viewpoint, Rng& rng);
std::pair<UnitQuaternion, SampleTrace> sample_quaternion(const ScorerParameters& params,
                                                         const ConditioningCache& cache,
                                                         Rng& rng);

// Greedy argmax decode (ties to the lowest bin index), components set to
// bin midpoints, renormalized only when the midpoint vector leaves the unit
// ball. Deterministic.
UnitQuaternion predict_quaternion(const ScorerParameters& params, int viewpoint);
UnitQuaternion predict_quaternion(const ScorerParameters& params, const ConditioningCache& cache);

// Exact log density of a query rotation in one pass: three masked softmax
// evaluations plus the dilution term. -inf when the model gives the
// sentence zero mass.
double log_density(const ScorerParameters& params, int viewpoint, const UnitQuaternion& q);
double log_density(const ScorerParameters& params, const ConditioningCache& cache,
                   const UnitQuaternion& q);

// Log density for the mog head (density evaluation only; sampling the mog
// variant is exposed solely as the debug helper below).
double mog_log_density(const ScorerParameters& params, int viewpoint, const UnitQuaternion& q);

// Debug utility: ancestral sampling through the per-component score-space
// mixtures. Not a supported prediction path.
UnitQuaternion debug_sample_mog(const ScorerParameters& params, int viewpoint, Rng& rng);

}  // namespace aqmm
