#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "aqmm/grid_baseline.hpp"
#include "aqmm/scorer.hpp"

namespace aqmm {

enum class ModelKind : std::uint32_t { aquamam = 0, aquamam_mog = 1, grid = 2 };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);  // throws on unknown names

// On disk (all integers little-endian):
//   "AQMM"  magic
//   u32     format version (1)
//   u32     model kind
//   kind-specific config fields, u32 each:
//     aquamam / aquamam-mog: n_bins, penc_frequencies, context_dim,
//                            hidden1, hidden2, head, mog_components, viewpoints
//     grid:                  context_dim, hidden, penc_frequencies, viewpoints
//   u32 + bytes  embedded run-config text
//   u64     parameter count
//   f32 x count  parameters in flat-layout order
struct Checkpoint {
    ModelKind kind = ModelKind::aquamam;
    std::optional<ScorerConfig> scorer_config;
    std::optional<GridModelConfig> grid_config;
    Eigen::VectorXd parameters;   // float32 values held as doubles
    std::string embedded_config;  // TOML text of the producing run

    ScorerParameters to_scorer() const;  // throws for kind grid
    GridModel to_grid_model() const;     // throws for scorer kinds

    static Checkpoint from_scorer(const ScorerParameters& params, std::string embedded_config);
    static Checkpoint from_grid_model(const GridModel& model, std::string embedded_config);
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// Throws std::runtime_error on a bad magic, unsupported version, kind/config
// mismatch, or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace aqmm
