#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aqmm/quaternion.hpp"
#include "aqmm/random.hpp"
#include "aqmm/scorer.hpp"
#include "aqmm/toy_dataset.hpp"

namespace aqmm {

// Haar-uniform stand-in for an equivolumetric grid; every cell is assigned
// the volume pi^2 / M.
struct RotationGrid {
    std::vector<UnitQuaternion> cells;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(cells.size()); }
    double cell_volume() const;

    static RotationGrid haar(int m, std::uint64_t seed);  // throws for m < 2
};

struct GridModelConfig {
    int context_dim = 64;
    int hidden = 64;
    int penc_frequencies = 6;
    int viewpoints = 6;

    void validate() const;
    int penc_dim() const { return 1 + 2 * penc_frequencies; }
    int feature_dim() const { return 9 * penc_dim(); }  // encoded rotation matrix
    std::int64_t parameter_count() const;

    bool operator==(const GridModelConfig&) const = default;
};

// Scores (viewpoint, rotation) pairs: the context embedding and the
// positionally encoded rotation matrix meet in the first layer, followed by
// one more hidden layer and a scalar readout. Flat parameter blocks, in
// checkpoint order, column-major:
//   embedding    context_dim x viewpoints
//   ctx_weight   hidden x context_dim
//   rot_weight   hidden x feature_dim
//   bias1        hidden
//   weight2/bias2 hidden x hidden / hidden
//   out_weight/out_bias  hidden / 1
class GridModel {
public:
    GridModel(const GridModelConfig& config, Rng& rng);
    GridModel(const GridModelConfig& config, Eigen::VectorXd theta);

    const GridModelConfig& config() const { return config_; }
    const Eigen::VectorXd& flat() const { return theta_; }
    Eigen::VectorXd& mutable_flat() { return theta_; }

    double score(int viewpoint, const UnitQuaternion& q) const;
    // Scores many rotations under one viewpoint context (vectorized path).
    Eigen::VectorXd score_batch(int viewpoint, std::span<const UnitQuaternion> rotations) const;

    static Eigen::VectorXd rotation_features(const UnitQuaternion& q, int penc_frequencies);

private:
    GridModelConfig config_;
    Eigen::VectorXd theta_;
};

struct GridTrainConfig {
    double lr = 1e-4;
    int batch_size = 128;
    int n_train = 4096;  // scored set size per sample: true rotation + n_train-1 negatives
    int epoch_samples = 40000;
    int max_epochs = 100;
    int patience = 5;
    int max_halvings = 8;
    int val_samples = 4096;
};

struct GridTrainResult {
    GridModel model;
    std::vector<EpochRecord> epochs;
    double best_val_nll = 0.0;
    int best_epoch = 0;
};

// Mean cross-entropy of each sample's true rotation scored against the
// shared negatives (class 0 of n_train candidates). Fills grad when given.
double grid_batch_loss(const GridModel& model, std::span<const ToySample> samples,
                       std::span<const UnitQuaternion> negatives,
                       Eigen::VectorXd* grad = nullptr);

// Negative-sampling training: each batch scores its true rotations against
// a fresh shared set of Haar negatives and minimizes cross-entropy against
// the true index. Throws on a non-finite loss.
GridTrainResult train_grid_model(const ToyModeSet& mode_set, const GridModelConfig& config,
                                 const GridTrainConfig& train_config, std::uint64_t seed);

// ln softmax over {q} union grid at q, minus ln(pi^2 / (M + 1)).
double grid_log_density(const GridModel& model, int viewpoint, const UnitQuaternion& q,
                        const RotationGrid& grid);

// ln(M / pi^2): the density ceiling of an M-cell grid.
double theoretical_max_ll(std::int64_t m);

// Categorical draw over the grid softmax; returns the chosen cell rotation.
UnitQuaternion sample_from_grid(const GridModel& model, int viewpoint, const RotationGrid& grid,
                                Rng& rng);

// Precomputed per-viewpoint softmax over a fixed grid, for repeated draws.
struct GridSampler {
    GridSampler(const GridModel& model, int viewpoint, const RotationGrid& grid);
    UnitQuaternion draw(Rng& rng) const;

    const RotationGrid* grid;
    Eigen::VectorXd cdf;
};

}  // namespace aqmm
