#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aqmm/binning.hpp"
#include "aqmm/quaternion.hpp"
#include "aqmm/random.hpp"

namespace aqmm {

struct ToySample {
    int viewpoint = 0;
    UnitQuaternion q;
};

// Hierarchical ground truth: viewpoint i in 0..5 owns 2^i Haar-uniform
// rotation modes; samples pick a viewpoint uniformly and then a mode
// uniformly within it.
class ToyModeSet {
public:
    static constexpr int kViewpoints = 6;

    ToyModeSet(std::uint64_t seed, std::vector<std::vector<UnitQuaternion>> modes);

    std::uint64_t seed() const { return seed_; }
    int viewpoints() const { return kViewpoints; }
    const std::vector<UnitQuaternion>& modes(int viewpoint) const;
    int mode_count(int viewpoint) const { return static_cast<int>(modes(viewpoint).size()); }
    int total_modes() const;  // 63

private:
    std::uint64_t seed_;
    std::vector<std::vector<UnitQuaternion>> modes_;
};

// Draws the 1, 2, 4, 8, 16, 32 modes from the seed. Within a viewpoint,
// modes closer than 1 degree trigger a redraw (error after 100 attempts).
ToyModeSet generate_mode_set(std::uint64_t seed);

class ToySampleStream {
public:
    ToySampleStream(const ToyModeSet& mode_set, std::uint64_t seed)
        : mode_set_(&mode_set), rng_(seed) {}

    ToySample next();

private:
    const ToyModeSet* mode_set_;
    Rng rng_;
};

struct EvalEntry {
    int viewpoint = 0;
    int mode_index = 0;
};

// The replicated evaluation set: each (viewpoint i, mode j) pair repeated
// 2^(5-i) times, 192 entries total. Its unweighted mean log-likelihood
// equals the infinite-sample expectation under the generating process.
std::vector<EvalEntry> evaluation_set(const ToyModeSet& mode_set);

struct OptimalLl {
    double total = 0.0;           // classification + dilution
    double classification = 0.0;  // mean ln P(sentence), accounts for collisions
    double dilution = 0.0;        // mean ln(N q_w / (2 w_y w_z)) over the set
};

// Best achievable average log-likelihood for this mode set and partition:
// an oracle that puts, per viewpoint, probability (modes sharing the
// sentence)/2^i on each mode sentence and is exact within each bin cell.
OptimalLl theoretical_optimal_ll(const ToyModeSet& mode_set, const BinPartition& partition);

// JSON-lines persistence. A dataset file starts with a mode-set header
// record followed by one record per sample.
void write_mode_set(const std::string& path, const ToyModeSet& mode_set);
ToyModeSet read_mode_set(const std::string& path);
void write_dataset(const std::string& path, const ToyModeSet& mode_set,
                   long n_samples, std::uint64_t sample_seed);

}  // namespace aqmm
