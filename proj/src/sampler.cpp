#include "aqmm/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace aqmm {

namespace {

constexpr long kRejectionCap = 1000000;

void check_cache(const ScorerParameters& params, const ConditioningCache& cache) {
    if (cache.viewpoint < 0 || cache.viewpoint >= params.config().viewpoints) {
        throw std::invalid_argument("sampler: cache holds an unknown viewpoint");
    }
    if (cache.params_version != params.version()) {
        throw std::invalid_argument("sampler: conditioning cache is stale (parameters changed)");
    }
}

// Draw uniformly inside [a, b) without letting rounding escape the bin.
double draw_in_bin(Rng& rng, double a, double b) {
    double x = rng.uniform(a, b);
    if (x >= b) x = std::nextafter(b, a);
    return x;
}

int categorical_from_range(const Eigen::VectorXd& logits, const LegalRange& range, Rng& rng) {
    const auto seg = logits.segment(range.lo, range.count());
    const double m = seg.maxCoeff();
    const Eigen::ArrayXd e = (seg.array() - m).exp();
    const double z = e.sum();
    const double u = rng.uniform() * z;
    double acc = 0.0;
    for (int i = 0; i < range.count(); ++i) {
        acc += e[i];
        if (u < acc) return range.lo + i;
    }
    return range.hi;
}

struct DecodedBins {
    QuaternionSentence sentence;
    std::array<double, 3> provisional;
    std::array<std::pair<double, double>, 3> cell_edges;
};

LegalRange step_range(const BinPartition& partition, const QuaternionSentence& sentence, int step) {
    if (step == 0) return LegalRange{0, partition.size() - 1};
    double budget = 1.0 - partition.min_magnitude_sq(sentence.x);
    if (step == 2) budget -= partition.min_magnitude_sq(sentence.y);
    return partition.legal_range_for_budget(budget);
}

}  // namespace

ConditioningCache make_conditioning_cache(const ScorerParameters& params, int viewpoint) {
    if (viewpoint < 0 || viewpoint >= params.config().viewpoints) {
        throw std::invalid_argument("make_conditioning_cache: unknown viewpoint id");
    }
    return ConditioningCache{viewpoint, params.version(), params.embedding().col(viewpoint)};
}

std::pair<UnitQuaternion, SampleTrace> sample_quaternion(const ScorerParameters& params,
                                                         const ConditioningCache& cache,
                                                         Rng& rng) {
    check_cache(params, cache);
    const BinPartition partition(params.config().n_bins);

    DecodedBins dec;
    std::array<double, 3> prev{};
    for (int step = 0; step < 3; ++step) {
        const Eigen::VectorXd logits = score_step_with_context(
            params, cache.context, step, std::span<const double>(prev.data(), step));
        const LegalRange range = step_range(partition, dec.sentence, step);
        const int bin = categorical_from_range(logits, range, rng);
        const double lo = partition.lower(bin);
        const double hi = partition.upper(bin);
        const double q_hat = draw_in_bin(rng, lo, hi);
        if (step == 0) dec.sentence.x = bin;
        if (step == 1) dec.sentence.y = bin;
        if (step == 2) dec.sentence.z = bin;
        dec.provisional[step] = q_hat;
        dec.cell_edges[step] = {lo, hi};
        prev[step] = q_hat;
    }

    SampleTrace trace;
    trace.sentence = dec.sentence;
    trace.provisional = dec.provisional;
    trace.cell_edges = dec.cell_edges;

    // Uniform over the cell intersected with the unit ball.
    double x = 0.0, y = 0.0, z = 0.0;
    bool accepted = false;
    for (long attempt = 0; attempt < kRejectionCap; ++attempt) {
        x = draw_in_bin(rng, dec.cell_edges[0].first, dec.cell_edges[0].second);
        y = draw_in_bin(rng, dec.cell_edges[1].first, dec.cell_edges[1].second);
        z = draw_in_bin(rng, dec.cell_edges[2].first, dec.cell_edges[2].second);
        if (x * x + y * y + z * z <= 1.0) {
            accepted = true;
            break;
        }
        ++trace.rejections;
    }
    if (!accepted) {
        throw std::runtime_error(
            "sample_quaternion: rejection cap exceeded for cell [" +
            std::to_string(dec.cell_edges[0].first) + "," + std::to_string(dec.cell_edges[0].second) + ")x[" +
            std::to_string(dec.cell_edges[1].first) + "," + std::to_string(dec.cell_edges[1].second) + ")x[" +
            std::to_string(dec.cell_edges[2].first) + "," + std::to_string(dec.cell_edges[2].second) + ")");
    }
    trace.accepted = {x, y, z};
    const double q_w = std::sqrt(std::max(0.0, 1.0 - x * x - y * y - z * z));
    return {canonicalize(x, y, z, q_w), trace};
}

std::pair<UnitQuaternion, SampleTrace> sample_quaternion(const ScorerParameters& params,
                                                         int viewpoint, Rng& rng) {
    return sample_quaternion(params, make_conditioning_cache(params, viewpoint), rng);
}

UnitQuaternion predict_quaternion(const ScorerParameters& params, const ConditioningCache& cache) {
    check_cache(params, cache);
    const BinPartition partition(params.config().n_bins);

    QuaternionSentence sentence;
    std::array<double, 3> mid{};
    for (int step = 0; step < 3; ++step) {
        const Eigen::VectorXd logits = score_step_with_context(
            params, cache.context, step, std::span<const double>(mid.data(), step));
        const LegalRange range = step_range(partition, sentence, step);
        int best = range.lo;
        for (int i = range.lo + 1; i <= range.hi; ++i) {
            if (logits[i] > logits[best]) best = i;  // ties keep the lowest index
        }
        if (step == 0) sentence.x = best;
        if (step == 1) sentence.y = best;
        if (step == 2) sentence.z = best;
        mid[step] = partition.midpoint(best);
    }

    double norm_sq = mid[0] * mid[0] + mid[1] * mid[1] + mid[2] * mid[2];
    if (norm_sq > 1.0) {
        const double scale = 1.0 / std::sqrt(norm_sq);
        for (double& m : mid) m *= scale;
        norm_sq = mid[0] * mid[0] + mid[1] * mid[1] + mid[2] * mid[2];
    }
    const double q_w = std::sqrt(std::max(0.0, 1.0 - norm_sq));
    return canonicalize(mid[0], mid[1], mid[2], q_w);
}

UnitQuaternion predict_quaternion(const ScorerParameters& params, int viewpoint) {
    return predict_quaternion(params, make_conditioning_cache(params, viewpoint));
}

double log_density(const ScorerParameters& params, const ConditioningCache& cache,
                   const UnitQuaternion& q) {
    check_cache(params, cache);
    const BinPartition partition(params.config().n_bins);
    const QuaternionSentence sentence = partition.sentence_of(q);
    const std::array<double, 3> prev = {q.x(), q.y(), q.z()};

    double lm_log_prob = 0.0;
    for (int step = 0; step < 3; ++step) {
        const Eigen::VectorXd logits = score_step_with_context(
            params, cache.context, step, std::span<const double>(prev.data(), step));
        const LegalRange range = step_range(partition, sentence, step);
        const Eigen::VectorXd log_probs = masked_log_probs(logits, range);
        lm_log_prob += log_probs[sentence.label(step)];
    }
    return lm_log_prob + dilution_log(q, partition);
}

double log_density(const ScorerParameters& params, int viewpoint, const UnitQuaternion& q) {
    return log_density(params, make_conditioning_cache(params, viewpoint), q);
}

double mog_log_density(const ScorerParameters& params, int viewpoint, const UnitQuaternion& q) {
    const ConditioningCache cache = make_conditioning_cache(params, viewpoint);
    const std::array<double, 3> prev = {q.x(), q.y(), q.z()};
    std::array<MoGHeadOutput, 3> heads;
    for (int step = 0; step < 3; ++step) {
        heads[step] = score_step_mog_with_context(params, cache.context, step,
                                                  std::span<const double>(prev.data(), step));
    }
    return mog_full_log_density(q, heads);
}

UnitQuaternion debug_sample_mog(const ScorerParameters& params, int viewpoint, Rng& rng) {
    const ConditioningCache cache = make_conditioning_cache(params, viewpoint);
    std::array<double, 3> comp{};
    for (int step = 0; step < 3; ++step) {
        const MoGHeadOutput head = score_step_mog_with_context(
            params, cache.context, step, std::span<const double>(comp.data(), step));
        const double u = rng.uniform();
        double acc = 0.0;
        int k = head.components() - 1;
        for (int i = 0; i < head.components(); ++i) {
            acc += head.weights[i];
            if (u < acc) {
                k = i;
                break;
            }
        }
        const double s = head.means[k] + std::exp(head.log_scales[k]) * rng.normal();
        double bound = 1.0;
        if (step == 1) bound = std::sqrt(std::max(0.0, 1.0 - comp[0] * comp[0]));
        if (step == 2) bound = std::sqrt(std::max(0.0, 1.0 - comp[0] * comp[0] - comp[1] * comp[1]));
        comp[step] = bound > 0.0 ? mog_q_of_s(s, bound) : 0.0;
    }
    const double q_w =
        std::sqrt(std::max(0.0, 1.0 - comp[0] * comp[0] - comp[1] * comp[1] - comp[2] * comp[2]));
    return canonicalize(comp[0], comp[1], comp[2], q_w);
}

}  // namespace aqmm
