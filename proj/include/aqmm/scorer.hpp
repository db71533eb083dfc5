#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aqmm/binning.hpp"
#include "aqmm/density.hpp"
#include "aqmm/toy_dataset.hpp"

namespace aqmm {

enum class HeadKind { binned, mog };

struct ScorerConfig {
    int n_bins = 4096;         // N
    int penc_frequencies = 6;  // L
    int context_dim = 64;      // viewpoint embedding width, also the per-step encoder width
    int hidden1 = 128;
    int hidden2 = 128;
    HeadKind head = HeadKind::binned;
    int mog_components = 512;  // K, mog head only
    int viewpoints = 6;        // V

    void validate() const;  // throws on non-positive dimensions

    int penc_dim() const { return 1 + 2 * penc_frequencies; }
    int trunk_input_dim() const { return 2 * context_dim + 3; }
    int head_dim() const { return head == HeadKind::binned ? n_bins : 3 * mog_components; }
    std::int64_t parameter_count() const;

    bool operator==(const ScorerConfig&) const = default;
};

// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]
Eigen::VectorXd positional_encode(double x, int frequencies);

// All weights in one flat vector (checkpoint order), exposed through Eigen
// maps. Blocks, in order, all column-major:
//   embedding           context_dim x viewpoints
//   enc0_bias           context_dim            (step 0: no previous components)
//   enc1_weight/bias    context_dim x penc_dim / context_dim
//   enc2_weight/bias    context_dim x 2*penc_dim / context_dim
//   trunk1_weight/bias  hidden1 x trunk_input_dim / hidden1
//   trunk2_weight/bias  hidden2 x hidden1 / hidden2
//   head_weight/bias    head_dim x hidden2 / head_dim
// Every value is kept float32-representable so checkpoints round trip
// bit-exactly.
class ScorerParameters {
public:
    ScorerParameters(const ScorerConfig& config, Rng& rng);  // uniform(-1/sqrt(fan_in), +)
    ScorerParameters(const ScorerConfig& config, Eigen::VectorXd theta);

    const ScorerConfig& config() const { return config_; }
    const Eigen::VectorXd& flat() const { return theta_; }
    std::uint64_t version() const { return version_; }

    // Mutation entry point for the optimizer and tests; bumps the version.
    Eigen::VectorXd& mutable_flat() {
        ++version_;
        return theta_;
    }

    using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
    using ConstVec = Eigen::Map<const Eigen::VectorXd>;

    ConstMat embedding() const;
    ConstVec enc0_bias() const;
    ConstMat enc1_weight() const;
    ConstVec enc1_bias() const;
    ConstMat enc2_weight() const;
    ConstVec enc2_bias() const;
    ConstMat trunk1_weight() const;
    ConstVec trunk1_bias() const;
    ConstMat trunk2_weight() const;
    ConstVec trunk2_bias() const;
    ConstMat head_weight() const;
    ConstVec head_bias() const;

private:
    ScorerConfig config_;
    Eigen::VectorXd theta_;
    std::uint64_t version_ = 0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-9;
};

class AdamState {
public:
    AdamState(std::int64_t n_params, const AdamConfig& config);

    // Bias-corrected Adam step followed by float32 rounding of the
    // parameters (keeps them exactly serializable).
    void apply(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

    void halve_lr() { config_.lr *= 0.5; }
    double lr() const { return config_.lr; }
    long step() const { return step_; }
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }

private:
    AdamConfig config_;
    Eigen::VectorXd m_, v_;
    long step_ = 0;
};

// Raw logits over the N bins for one decode step of the binned head.
// prev carries the continuous previous components (step values of q_x, q_y);
// its length must equal step. Throws on unknown viewpoint, a step/prev
// mismatch, or a mog-head model.
Eigen::VectorXd score_step(const ScorerParameters& params, int viewpoint, int step,
                           std::span<const double> prev);

// MoG head parameters for one decode step. Same contract as score_step but
// for head kind mog; weights come out of a softmax.
MoGHeadOutput score_step_mog(const ScorerParameters& params, int viewpoint, int step,
                             std::span<const double> prev);

// Entry points taking a precomputed viewpoint context (the embedding
// column). score_step(params, v, ...) is exactly
// score_step_with_context(params, embedding().col(v), ...), which is what
// makes cached decoding bit-identical to the uncached path.
Eigen::VectorXd score_step_with_context(const ScorerParameters& params,
                                        const Eigen::VectorXd& context, int step,
                                        std::span<const double> prev);
MoGHeadOutput score_step_mog_with_context(const ScorerParameters& params,
                                          const Eigen::VectorXd& context, int step,
                                          std::span<const double> prev);

// Numerically stable log-softmax with illegal bins pinned to -inf.
// Throws when every bin is illegal.
Eigen::VectorXd masked_log_probs(const Eigen::VectorXd& logits, const LegalityMask& mask);
Eigen::VectorXd masked_log_probs(const Eigen::VectorXd& logits, const LegalRange& range);

struct ToyBatch {
    std::vector<ToySample> samples;
};

// Mean loss over the batch: masked three-step cross-entropy for the binned
// head, score-space MoG negative log-likelihood for the mog head.
double batch_loss(const ScorerParameters& params, const ToyBatch& batch);

// Per-sample masked sentence log-probabilities (binned head), batched.
// Adding dilution_log to each entry gives the sample's log density.
Eigen::VectorXd batch_sentence_log_probs(const ScorerParameters& params, const ToyBatch& batch);
double batch_loss_and_grad(const ScorerParameters& params, const ToyBatch& batch,
                           Eigen::VectorXd& grad);

// One optimizer step; returns the batch loss. Throws on a non-finite loss.
double training_step(ScorerParameters& params, AdamState& adam, const ToyBatch& batch);

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 128;
    int epoch_samples = 40000;
    int max_epochs = 624;
    int patience = 5;       // epochs without val improvement before halving
    int max_halvings = 8;   // consecutive halvings before stopping
    int val_samples = 4096;
};

struct EpochRecord {
    int epoch = 0;
    double train_nll = 0.0;
    double val_nll = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    double best_val_nll = 0.0;
    int best_epoch = 0;
    int total_halvings = 0;
};

struct TrainResult {
    ScorerParameters params;
    TrainLog log;
};

// Validation NLL over the fixed held-out draw that train_scorer tracks:
// val_samples hierarchical samples from stream seed derive_seed(seed, 2),
// evaluated in the same chunked batches. eval tooling uses this to
// reproduce the training log bit-exactly from a checkpoint.
double validation_nll(const ScorerParameters& params, const ToyModeSet& mode_set,
                      const TrainConfig& train_config, std::uint64_t seed);

// Streams fresh hierarchical samples, tracks validation NLL on a fixed
// held-out draw, halves the learning rate on plateaus, and returns the
// parameters with the best validation loss.
TrainResult train_scorer(const ScorerConfig& config, const ToyModeSet& mode_set,
                         const TrainConfig& train_config, std::uint64_t seed);

}  // namespace aqmm
