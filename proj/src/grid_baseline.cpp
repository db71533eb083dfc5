#include "aqmm/grid_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace aqmm {

namespace {

constexpr double kPiSquared = 9.86960440108935861883;

struct Layout {
    int d, h, f, v;
    std::int64_t emb, ctxw, rotw, b1, w2, b2, outw, outb, total;

    explicit Layout(const GridModelConfig& c)
        : d(c.context_dim), h(c.hidden), f(c.feature_dim()), v(c.viewpoints) {
        std::int64_t at = 0;
        emb = at;  at += static_cast<std::int64_t>(d) * v;
        ctxw = at; at += static_cast<std::int64_t>(h) * d;
        rotw = at; at += static_cast<std::int64_t>(h) * f;
        b1 = at;   at += h;
        w2 = at;   at += static_cast<std::int64_t>(h) * h;
        b2 = at;   at += h;
        outw = at; at += h;
        outb = at; at += 1;
        total = at;
    }
};

Eigen::ArrayXXd gelu(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Eigen::ArrayXXd gelu_grad(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * 3.14159265358979323846);
        return cdf + v * pdf;
    });
}

using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;

struct Views {
    ConstMat emb, ctxw, rotw, w2;
    ConstVec b1, b2, outw;
    double outb;

    Views(const Eigen::VectorXd& theta, const Layout& l)
        : emb(theta.data() + l.emb, l.d, l.v),
          ctxw(theta.data() + l.ctxw, l.h, l.d),
          rotw(theta.data() + l.rotw, l.h, l.f),
          w2(theta.data() + l.w2, l.h, l.h),
          b1(theta.data() + l.b1, l.h),
          b2(theta.data() + l.b2, l.h),
          outw(theta.data() + l.outw, l.h),
          outb(theta[l.outb]) {}
};

}  // namespace

double RotationGrid::cell_volume() const {
    return kPiSquared / size();
}

RotationGrid RotationGrid::haar(int m, std::uint64_t seed) {
    if (m < 2) throw std::invalid_argument("RotationGrid: need at least two cells");
    RotationGrid grid;
    grid.seed = seed;
    grid.cells.reserve(m);
    Rng rng(seed);
    for (int i = 0; i < m; ++i) grid.cells.push_back(sample_uniform_rotation(rng));
    return grid;
}

void GridModelConfig::validate() const {
    if (context_dim < 1 || hidden < 1 || viewpoints < 1 || penc_frequencies < 0) {
        throw std::invalid_argument("GridModelConfig: dimensions must be positive");
    }
}

std::int64_t GridModelConfig::parameter_count() const {
    return Layout(*this).total;
}

GridModel::GridModel(const GridModelConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    const Layout lay(config_);
    theta_.resize(lay.total);
    const auto fill = [&](std::int64_t at, std::int64_t count, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < count; ++i) theta_[at + i] = rng.uniform(-bound, bound);
    };
    fill(lay.emb, static_cast<std::int64_t>(lay.d) * lay.v, lay.d);
    fill(lay.ctxw, static_cast<std::int64_t>(lay.h) * lay.d, lay.d);
    fill(lay.rotw, static_cast<std::int64_t>(lay.h) * lay.f, lay.f);
    fill(lay.b1, lay.h, lay.d + lay.f);
    fill(lay.w2, static_cast<std::int64_t>(lay.h) * lay.h, lay.h);
    fill(lay.b2, lay.h, lay.h);
    fill(lay.outw, lay.h, lay.h);
    fill(lay.outb, 1, lay.h);
    theta_ = theta_.cast<float>().cast<double>();
}

GridModel::GridModel(const GridModelConfig& config, Eigen::VectorXd theta)
    : config_(config), theta_(std::move(theta)) {
    config_.validate();
    if (theta_.size() != Layout(config_).total) {
        throw std::invalid_argument("GridModel: parameter vector size mismatch");
    }
}

Eigen::VectorXd GridModel::rotation_features(const UnitQuaternion& q, int penc_frequencies) {
    const Mat3 r = quat_to_matrix(q);
    const int p = 1 + 2 * penc_frequencies;
    Eigen::VectorXd features(9 * p);
    int at = 0;
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) {
            // Rotation-matrix entries can graze +-1 by an ulp.
            const double entry = std::min(1.0, std::max(-1.0, r(row, col)));
            features.segment(at, p) = positional_encode(entry, penc_frequencies);
            at += p;
        }
    }
    return features;
}

Eigen::VectorXd GridModel::score_batch(int viewpoint,
                                       std::span<const UnitQuaternion> rotations) const {
    if (viewpoint < 0 || viewpoint >= config_.viewpoints) {
        throw std::invalid_argument("GridModel: unknown viewpoint id");
    }
    const Layout lay(config_);
    const Views w(theta_, lay);
    const int m = static_cast<int>(rotations.size());

    Eigen::MatrixXd features(lay.f, m);
    for (int i = 0; i < m; ++i) {
        features.col(i) = rotation_features(rotations[i], config_.penc_frequencies);
    }
    const Eigen::VectorXd ctx_term = w.ctxw * w.emb.col(viewpoint) + w.b1;
    Eigen::MatrixXd z1 = w.rotw * features;
    z1.colwise() += ctx_term;
    const Eigen::MatrixXd a1 = gelu(z1.array());
    Eigen::MatrixXd z2 = w.w2 * a1;
    z2.colwise() += w.b2;
    const Eigen::MatrixXd a2 = gelu(z2.array());
    return (a2.transpose() * w.outw).array() + w.outb;
}

double GridModel::score(int viewpoint, const UnitQuaternion& q) const {
    return score_batch(viewpoint, std::span<const UnitQuaternion>(&q, 1))[0];
}

double grid_batch_loss(const GridModel& model, std::span<const ToySample> samples,
                       std::span<const UnitQuaternion> negatives,
                       Eigen::VectorXd* grad_out) {
    const GridModelConfig& config = model.config();
    const Layout lay(config);
    const Views w(model.flat(), lay);
    const int b = static_cast<int>(samples.size());
    const int nn = static_cast<int>(negatives.size());
    const int n = nn + 1;
    if (b < 1 || nn < 1) {
        throw std::invalid_argument("grid_batch_loss: need samples and negatives");
    }

    Eigen::MatrixXd neg_features(lay.f, nn);
    for (int j = 0; j < nn; ++j) {
        neg_features.col(j) = GridModel::rotation_features(negatives[j], config.penc_frequencies);
    }
    const Eigen::MatrixXd neg_pre = w.rotw * neg_features;  // h x nn

    double loss = 0.0;
    Eigen::MatrixXd gemb_store, gctxw, grotw, gw2;
    Eigen::VectorXd gb1, gb2, goutw;
    double goutb = 0.0;
    if (grad_out != nullptr) {
        grad_out->setZero(lay.total);
        gemb_store.setZero(lay.d, lay.v);
        gctxw.setZero(lay.h, lay.d);
        grotw.setZero(lay.h, lay.f);
        gw2.setZero(lay.h, lay.h);
        gb1.setZero(lay.h);
        gb2.setZero(lay.h);
        goutw.setZero(lay.h);
    }

    for (int i = 0; i < b; ++i) {
        const ToySample& s = samples[i];
        const Eigen::VectorXd true_features =
            GridModel::rotation_features(s.q, config.penc_frequencies);
        const Eigen::VectorXd ctx = w.emb.col(s.viewpoint);
        const Eigen::VectorXd ctx_term = w.ctxw * ctx + w.b1;

        Eigen::MatrixXd z1(lay.h, n);
        z1.col(0) = w.rotw * true_features;
        z1.rightCols(nn) = neg_pre;
        z1.colwise() += ctx_term;
        const Eigen::MatrixXd a1 = gelu(z1.array());
        Eigen::MatrixXd z2 = w.w2 * a1;
        z2.colwise() += w.b2;
        const Eigen::MatrixXd a2 = gelu(z2.array());
        Eigen::VectorXd scores = (a2.transpose() * w.outw).array() + w.outb;

        const double max_score = scores.maxCoeff();
        const Eigen::ArrayXd e = (scores.array() - max_score).exp();
        const double zsum = e.sum();
        loss += max_score + std::log(zsum) - scores[0];

        if (grad_out == nullptr) continue;
        Eigen::VectorXd dscores = (e / zsum).matrix();
        dscores[0] -= 1.0;

        goutw.noalias() += a2 * dscores;
        goutb += dscores.sum();
        Eigen::MatrixXd da2 = w.outw * dscores.transpose();
        Eigen::MatrixXd dz2 = da2.array() * gelu_grad(z2.array());
        gw2.noalias() += dz2 * a1.transpose();
        gb2 += dz2.rowwise().sum();
        Eigen::MatrixXd da1 = w.w2.transpose() * dz2;
        Eigen::MatrixXd dz1 = da1.array() * gelu_grad(z1.array());
        const Eigen::VectorXd dctx_term = dz1.rowwise().sum();
        gb1 += dctx_term;
        gctxw.noalias() += dctx_term * ctx.transpose();
        gemb_store.col(s.viewpoint) += w.ctxw.transpose() * dctx_term;
        grotw.noalias() += dz1.col(0) * true_features.transpose();
        grotw.noalias() += dz1.rightCols(nn) * neg_features.transpose();
    }

    if (grad_out != nullptr) {
        double* g = grad_out->data();
        Eigen::Map<Eigen::MatrixXd>(g + lay.emb, lay.d, lay.v) = gemb_store;
        Eigen::Map<Eigen::MatrixXd>(g + lay.ctxw, lay.h, lay.d) = gctxw;
        Eigen::Map<Eigen::MatrixXd>(g + lay.rotw, lay.h, lay.f) = grotw;
        Eigen::Map<Eigen::VectorXd>(g + lay.b1, lay.h) = gb1;
        Eigen::Map<Eigen::MatrixXd>(g + lay.w2, lay.h, lay.h) = gw2;
        Eigen::Map<Eigen::VectorXd>(g + lay.b2, lay.h) = gb2;
        Eigen::Map<Eigen::VectorXd>(g + lay.outw, lay.h) = goutw;
        (*grad_out)[lay.outb] = goutb;
        *grad_out /= static_cast<double>(b);
    }
    return loss / b;
}

GridTrainResult train_grid_model(const ToyModeSet& mode_set, const GridModelConfig& config,
                                 const GridTrainConfig& train_config, std::uint64_t seed) {
    config.validate();
    if (train_config.batch_size < 1 || train_config.n_train < 2 ||
        train_config.epoch_samples < 1 || train_config.max_epochs < 1 ||
        train_config.patience < 1 || train_config.val_samples < 1) {
        throw std::invalid_argument("train_grid_model: invalid training configuration");
    }
    const Layout lay(config);

    Rng init_rng(derive_seed(seed, 0));
    GridModel model(config, init_rng);
    AdamState adam(lay.total, AdamConfig{.lr = train_config.lr});

    ToySampleStream train_stream(mode_set, derive_seed(seed, 1));
    Rng negative_rng(derive_seed(seed, 2));

    // Fixed validation task: samples and negatives drawn once.
    ToySampleStream val_stream(mode_set, derive_seed(seed, 3));
    Rng val_negative_rng(derive_seed(seed, 4));
    std::vector<ToySample> val_set;
    for (int i = 0; i < train_config.val_samples; ++i) val_set.push_back(val_stream.next());
    std::vector<UnitQuaternion> val_negatives;
    for (int i = 0; i < train_config.n_train - 1; ++i) {
        val_negatives.push_back(sample_uniform_rotation(val_negative_rng));
    }

    const int n = train_config.n_train;

    const auto validation_nll = [&](const GridModel& gm) {
        double total = 0.0;
        const int chunk = 64;
        int done = 0;
        while (done < static_cast<int>(val_set.size())) {
            const int count = std::min<int>(chunk, static_cast<int>(val_set.size()) - done);
            total += grid_batch_loss(gm, std::span(val_set).subspan(done, count),
                                     val_negatives, nullptr) * count;
            done += count;
        }
        return total / static_cast<double>(val_set.size());
    };

    GridTrainResult result{std::move(model), {}, std::numeric_limits<double>::infinity(), 0};
    Eigen::VectorXd best_theta = result.model.flat();
    Eigen::VectorXd grad(lay.total);
    std::vector<ToySample> batch;
    std::vector<UnitQuaternion> negatives(n - 1);
    int epochs_since_improve = 0;
    int halvings_in_row = 0;

    for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
        double train_total = 0.0;
        int remaining = train_config.epoch_samples;
        while (remaining > 0) {
            const int count = std::min(train_config.batch_size, remaining);
            batch.clear();
            for (int i = 0; i < count; ++i) batch.push_back(train_stream.next());
            for (auto& neg : negatives) neg = sample_uniform_rotation(negative_rng);
            const double loss = grid_batch_loss(result.model, batch, negatives, &grad);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train_grid_model: non-finite loss at epoch " +
                                         std::to_string(epoch));
            }
            adam.apply(result.model.mutable_flat(), grad);
            train_total += loss * count;
            remaining -= count;
        }
        const double train_nll = train_total / train_config.epoch_samples;
        const double val_nll = validation_nll(result.model);
        result.epochs.push_back(EpochRecord{epoch, train_nll, val_nll, adam.lr()});

        if (val_nll < result.best_val_nll) {
            result.best_val_nll = val_nll;
            result.best_epoch = epoch;
            best_theta = result.model.flat();
            epochs_since_improve = 0;
            halvings_in_row = 0;
        } else if (++epochs_since_improve >= train_config.patience) {
            adam.halve_lr();
            ++halvings_in_row;
            epochs_since_improve = 0;
            if (halvings_in_row >= train_config.max_halvings) break;
        }
    }

    result.model = GridModel(config, std::move(best_theta));
    return result;
}

double theoretical_max_ll(std::int64_t m) {
    if (m < 1) throw std::invalid_argument("theoretical_max_ll: m must be >= 1");
    return std::log(static_cast<double>(m) / kPiSquared);
}

double grid_log_density(const GridModel& model, int viewpoint, const UnitQuaternion& q,
                        const RotationGrid& grid) {
    const Eigen::VectorXd grid_scores = model.score_batch(viewpoint, grid.cells);
    const double query_score = model.score(viewpoint, q);
    const double m = std::max(query_score, grid_scores.maxCoeff());
    const double lse =
        m + std::log(std::exp(query_score - m) + (grid_scores.array() - m).exp().sum());
    const double log_volume = std::log(kPiSquared / (grid.size() + 1));
    return (query_score - lse) - log_volume;
}

GridSampler::GridSampler(const GridModel& model, int viewpoint, const RotationGrid& g)
    : grid(&g) {
    const Eigen::VectorXd scores = model.score_batch(viewpoint, g.cells);
    const double m = scores.maxCoeff();
    Eigen::ArrayXd e = (scores.array() - m).exp();
    e /= e.sum();
    cdf.resize(e.size());
    double acc = 0.0;
    for (int i = 0; i < e.size(); ++i) {
        acc += e[i];
        cdf[i] = acc;
    }
}

UnitQuaternion GridSampler::draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u);
    int idx = static_cast<int>(it - cdf.data());
    if (idx >= grid->size()) idx = grid->size() - 1;
    return grid->cells[idx];
}

UnitQuaternion sample_from_grid(const GridModel& model, int viewpoint, const RotationGrid& grid,
                                Rng& rng) {
    return GridSampler(model, viewpoint, grid).draw(rng);
}

}  // namespace aqmm
