#include "aqmm/toy_dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "aqmm/density.hpp"

namespace aqmm {

namespace {

constexpr double kDegree = 3.14159265358979323846 / 180.0;

std::string format_q(const UnitQuaternion& q) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "[%.17g,%.17g,%.17g,%.17g]", q.x(), q.y(), q.z(), q.w());
    return buf;
}

UnitQuaternion parse_q(const nlohmann::json& arr) {
    if (!arr.is_array() || arr.size() != 4) {
        throw std::runtime_error("dataset: quaternion record must be a 4-array");
    }
    return UnitQuaternion(arr[0].get<double>(), arr[1].get<double>(),
                          arr[2].get<double>(), arr[3].get<double>());
}

}  // namespace

ToyModeSet::ToyModeSet(std::uint64_t seed, std::vector<std::vector<UnitQuaternion>> modes)
    : seed_(seed), modes_(std::move(modes)) {
    if (modes_.size() != kViewpoints) {
        throw std::invalid_argument("ToyModeSet: expected 6 viewpoints");
    }
    for (int i = 0; i < kViewpoints; ++i) {
        if (modes_[i].size() != static_cast<std::size_t>(1 << i)) {
            throw std::invalid_argument("ToyModeSet: viewpoint " + std::to_string(i) +
                                        " must have 2^" + std::to_string(i) + " modes");
        }
    }
}

const std::vector<UnitQuaternion>& ToyModeSet::modes(int viewpoint) const {
    if (viewpoint < 0 || viewpoint >= kViewpoints) {
        throw std::invalid_argument("ToyModeSet: viewpoint out of range");
    }
    return modes_[viewpoint];
}

int ToyModeSet::total_modes() const {
    int total = 0;
    for (const auto& m : modes_) total += static_cast<int>(m.size());
    return total;
}

ToyModeSet generate_mode_set(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<UnitQuaternion>> modes(ToyModeSet::kViewpoints);
    for (int i = 0; i < ToyModeSet::kViewpoints; ++i) {
        const int count = 1 << i;
        auto& list = modes[i];
        list.reserve(count);
        int retries = 0;
        while (static_cast<int>(list.size()) < count) {
            const UnitQuaternion q = sample_uniform_rotation(rng);
            bool distinct = true;
            for (const auto& other : list) {
                if (geodesic_distance(q, other) <= kDegree) {
                    distinct = false;
                    break;
                }
            }
            if (distinct) {
                list.push_back(q);
            } else if (++retries > 100) {
                throw std::runtime_error("generate_mode_set: could not draw distinct modes");
            }
        }
    }
    return ToyModeSet(seed, std::move(modes));
}

ToySample ToySampleStream::next() {
    const int viewpoint = static_cast<int>(rng_.uniform_index(ToyModeSet::kViewpoints));
    const auto& modes = mode_set_->modes(viewpoint);
    const auto mode = rng_.uniform_index(modes.size());
    return ToySample{viewpoint, modes[mode]};
}

std::vector<EvalEntry> evaluation_set(const ToyModeSet& mode_set) {
    std::vector<EvalEntry> entries;
    entries.reserve(192);
    for (int i = 0; i < mode_set.viewpoints(); ++i) {
        const int copies = 1 << (5 - i);
        for (int j = 0; j < mode_set.mode_count(i); ++j) {
            for (int c = 0; c < copies; ++c) {
                entries.push_back(EvalEntry{i, j});
            }
        }
    }
    return entries;
}

OptimalLl theoretical_optimal_ll(const ToyModeSet& mode_set, const BinPartition& partition) {
    OptimalLl result;
    long total_entries = 0;
    for (int i = 0; i < mode_set.viewpoints(); ++i) {
        const auto& modes = mode_set.modes(i);
        // Modes sharing a sentence share its probability mass.
        std::map<std::tuple<int, int, int>, int> sentence_counts;
        const auto key = [&](const UnitQuaternion& q) {
            const QuaternionSentence s = partition.sentence_of(q);
            return std::make_tuple(s.x, s.y, s.z);
        };
        for (const auto& q : modes) ++sentence_counts[key(q)];
        const int copies = 1 << (5 - i);
        for (const auto& q : modes) {
            const int shared = sentence_counts[key(q)];
            const double cls = std::log(static_cast<double>(shared) / modes.size());
            const double dil = dilution_log(q, partition);
            result.classification += copies * cls;
            result.dilution += copies * dil;
            total_entries += copies;
        }
    }
    result.classification /= static_cast<double>(total_entries);
    result.dilution /= static_cast<double>(total_entries);
    result.total = result.classification + result.dilution;
    return result;
}

void write_mode_set(const std::string& path, const ToyModeSet& mode_set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_mode_set: cannot open " + path);
    out << "{\"type\":\"mode_set\",\"seed\":" << mode_set.seed() << ",\"modes\":[";
    for (int i = 0; i < mode_set.viewpoints(); ++i) {
        if (i > 0) out << ",";
        out << "[";
        const auto& modes = mode_set.modes(i);
        for (std::size_t j = 0; j < modes.size(); ++j) {
            if (j > 0) out << ",";
            out << format_q(modes[j]);
        }
        out << "]";
    }
    out << "]}\n";
    if (!out) throw std::runtime_error("write_mode_set: write failed for " + path);
}

ToyModeSet read_mode_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_mode_set: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_mode_set: empty file " + path);
    const auto header = nlohmann::json::parse(line);
    if (header.value("type", "") != "mode_set") {
        throw std::runtime_error("read_mode_set: first record is not a mode_set header");
    }
    std::vector<std::vector<UnitQuaternion>> modes;
    for (const auto& viewpoint : header.at("modes")) {
        std::vector<UnitQuaternion> list;
        for (const auto& q : viewpoint) list.push_back(parse_q(q));
        modes.push_back(std::move(list));
    }
    return ToyModeSet(header.at("seed").get<std::uint64_t>(), std::move(modes));
}

void write_dataset(const std::string& path, const ToyModeSet& mode_set,
                   long n_samples, std::uint64_t sample_seed) {
    write_mode_set(path, mode_set);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
    ToySampleStream stream(mode_set, sample_seed);
    for (long i = 0; i < n_samples; ++i) {
        const ToySample s = stream.next();
        out << "{\"viewpoint\":" << s.viewpoint << ",\"q\":" << format_q(s.q) << "}\n";
    }
    if (!out) throw std::runtime_error("write_dataset: write failed for " + path);
}

}  // namespace aqmm
