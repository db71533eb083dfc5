#pragma once

#include <span>
#include <vector>

#include "aqmm/quaternion.hpp"

namespace aqmm {

struct QuaternionSentence {
    int x = 0;
    int y = 0;
    int z = 0;

    bool operator==(const QuaternionSentence&) const = default;
    int label(int step) const { return step == 0 ? x : (step == 1 ? y : z); }
};

// Per-bin strict-illegality flags; true = the bin cannot contain any value
// compatible with the unit-norm constraint given the prefix bins.
struct LegalityMask {
    std::vector<bool> illegal;

    int size() const { return static_cast<int>(illegal.size()); }
    bool is_illegal(int i) const { return illegal[i]; }
};

// Contiguous range [lo, hi] of legal bins. Minimum bin magnitude is
// V-shaped over the bin index, so the legal set is always an interval.
struct LegalRange {
    int lo = 0;
    int hi = -1;

    bool contains(int i) const { return lo <= i && i <= hi; }
    int count() const { return hi - lo + 1; }
};

// Partition of [-1, 1] into N equal bins [a_i, b_i), a_i = -1 + 2i/N.
class BinPartition {
public:
    // Throws for N < 2. Odd N is accepted (0 becomes interior to a bin);
    // is_even() lets callers warn about it.
    explicit BinPartition(int n);

    int size() const { return n_; }
    bool is_even() const { return n_ % 2 == 0; }
    double width() const { return 2.0 / n_; }

    double lower(int i) const { return -1.0 + 2.0 * i / n_; }
    double upper(int i) const { return -1.0 + 2.0 * (i + 1) / n_; }
    double midpoint(int i) const { return (lower(i) + upper(i)) / 2.0; }

    // floor(N(x+1)/2) with x = 1 clamped into the last bin.
    // Throws for x outside [-1, 1].
    int bin_of(double x) const;

    // inf |x| over [a_i, b_i): 0 if the bin straddles 0, else the closer edge.
    double min_magnitude(int i) const;
    double min_magnitude_sq(int i) const {
        const double m = min_magnitude(i);
        return m * m;
    }

    // Bin i is strictly illegal iff min_magnitude(i)^2 + used_sq > 1, where
    // used_sq is the sum of squared minimum magnitudes of the prefix bins.
    // Equality stays legal. Throws if the prefix itself is illegal.
    LegalityMask strictly_illegal_mask(std::span<const int> prev_bins) const;
    LegalRange legal_range(std::span<const int> prev_bins) const;
    LegalRange legal_range_for_budget(double remaining_min_sq) const;

    // Squared-minimum-magnitude budget left after the prefix bins.
    double prefix_budget(std::span<const int> prev_bins) const;

    // Length of [a_i, b_i) intersected with [-sqrt(remaining_sq), sqrt(remaining_sq)].
    double constrained_width(int i, double remaining_sq) const;

    QuaternionSentence sentence_of(const UnitQuaternion& q) const;

private:
    int n_;
};

}  // namespace aqmm
