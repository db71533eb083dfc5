#include "aqmm/binning.hpp"

#include <cmath>
#include <stdexcept>

namespace aqmm {

BinPartition::BinPartition(int n) : n_(n) {
    if (n < 2) {
        throw std::invalid_argument("BinPartition: N must be >= 2");
    }
}

int BinPartition::bin_of(double x) const {
    if (!(x >= -1.0 && x <= 1.0)) {
        throw std::invalid_argument("bin_of: value outside [-1, 1]");
    }
    const int k = static_cast<int>(std::floor(n_ * (x + 1.0) / 2.0));
    return std::min(k, n_ - 1);
}

double BinPartition::min_magnitude(int i) const {
    if (i < 0 || i >= n_) {
        throw std::invalid_argument("min_magnitude: bin index out of range");
    }
    const double a = lower(i);
    const double b = upper(i);
    if (b <= 0.0) return -b;
    if (a >= 0.0) return a;
    return 0.0;  // bin straddles zero
}

double BinPartition::prefix_budget(std::span<const int> prev_bins) const {
    if (prev_bins.size() > 2) {
        throw std::invalid_argument("prefix_budget: at most two prefix bins");
    }
    double used = 0.0;
    for (int b : prev_bins) used += min_magnitude_sq(b);
    if (used > 1.0) {
        throw std::invalid_argument("prefix_budget: prefix bins already violate the unit norm");
    }
    return 1.0 - used;
}

LegalityMask BinPartition::strictly_illegal_mask(std::span<const int> prev_bins) const {
    const double budget = prefix_budget(prev_bins);
    LegalityMask mask;
    mask.illegal.resize(n_);
    for (int i = 0; i < n_; ++i) {
        mask.illegal[i] = min_magnitude_sq(i) > budget;
    }
    return mask;
}

LegalRange BinPartition::legal_range_for_budget(double budget) const {
    // legal iff min_magnitude_sq(i) <= budget; min magnitude is
    // non-increasing up to the zero bin and non-decreasing after it,
    // so binary-search each half.
    budget = std::max(0.0, budget);
    const int center = n_ / 2;  // min_magnitude(center) == 0 for any N >= 2
    int lo = center;
    {
        int a = 0, b = center;
        while (a < b) {
            const int mid = (a + b) / 2;
            if (min_magnitude_sq(mid) <= budget) {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        lo = a;
    }
    int hi = center;
    {
        int a = center, b = n_ - 1;
        while (a < b) {
            const int mid = (a + b + 1) / 2;
            if (min_magnitude_sq(mid) <= budget) {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        hi = a;
    }
    return LegalRange{lo, hi};
}

LegalRange BinPartition::legal_range(std::span<const int> prev_bins) const {
    return legal_range_for_budget(prefix_budget(prev_bins));
}

double BinPartition::constrained_width(int i, double remaining_sq) const {
    const double r = std::sqrt(std::max(0.0, remaining_sq));
    const double lo = std::max(lower(i), -r);
    const double hi = std::min(upper(i), r);
    return std::max(0.0, hi - lo);
}

QuaternionSentence BinPartition::sentence_of(const UnitQuaternion& q) const {
    return QuaternionSentence{bin_of(q.x()), bin_of(q.y()), bin_of(q.z())};
}

}  // namespace aqmm
