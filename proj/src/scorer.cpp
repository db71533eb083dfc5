#include "aqmm/scorer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace aqmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;
constexpr double kLog2Pi = 1.8378770664093454836;

// Parameter block offsets into the flat vector, in checkpoint order.
struct Layout {
    int d, p, in, h1, h2, o, v;
    std::int64_t emb, enc0b, enc1w, enc1b, enc2w, enc2b;
    std::int64_t t1w, t1b, t2w, t2b, hw, hb, total;

    explicit Layout(const ScorerConfig& c)
        : d(c.context_dim), p(c.penc_dim()), in(c.trunk_input_dim()),
          h1(c.hidden1), h2(c.hidden2), o(c.head_dim()), v(c.viewpoints) {
        std::int64_t at = 0;
        emb = at;   at += static_cast<std::int64_t>(d) * v;
        enc0b = at; at += d;
        enc1w = at; at += static_cast<std::int64_t>(d) * p;
        enc1b = at; at += d;
        enc2w = at; at += static_cast<std::int64_t>(d) * 2 * p;
        enc2b = at; at += d;
        t1w = at;   at += static_cast<std::int64_t>(h1) * in;
        t1b = at;   at += h1;
        t2w = at;   at += static_cast<std::int64_t>(h2) * h1;
        t2b = at;   at += h2;
        hw = at;    at += static_cast<std::int64_t>(o) * h2;
        hb = at;    at += o;
        total = at;
    }
};

Eigen::ArrayXXd gelu(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}

Eigen::ArrayXXd gelu_grad(const Eigen::ArrayXXd& x) {
    return x.unaryExpr([](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * kPi);
        return cdf + v * pdf;
    });
}

void round_to_float(Eigen::VectorXd& theta) {
    theta = theta.cast<float>().cast<double>();
}

}  // namespace

void ScorerConfig::validate() const {
    if (n_bins < 2) throw std::invalid_argument("ScorerConfig: n_bins must be >= 2");
    if (penc_frequencies < 0) throw std::invalid_argument("ScorerConfig: penc_frequencies must be >= 0");
    if (context_dim < 1 || hidden1 < 1 || hidden2 < 1) {
        throw std::invalid_argument("ScorerConfig: layer widths must be positive");
    }
    if (head == HeadKind::mog && mog_components < 1) {
        throw std::invalid_argument("ScorerConfig: mog_components must be positive");
    }
    if (viewpoints < 1) throw std::invalid_argument("ScorerConfig: viewpoints must be positive");
}

std::int64_t ScorerConfig::parameter_count() const {
    return Layout(*this).total;
}

Eigen::VectorXd positional_encode(double x, int frequencies) {
    if (!(std::abs(x) <= 1.0)) {
        throw std::invalid_argument("positional_encode: |x| must be <= 1");
    }
    Eigen::VectorXd out(1 + 2 * frequencies);
    out[0] = x;
    double scale = kPi;
    for (int k = 0; k < frequencies; ++k) {
        out[1 + 2 * k] = std::sin(scale * x);
        out[2 + 2 * k] = std::cos(scale * x);
        scale *= 2.0;
    }
    return out;
}

ScorerParameters::ScorerParameters(const ScorerConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    const Layout lay(config_);
    theta_.resize(lay.total);
    const auto fill = [&](std::int64_t at, std::int64_t count, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < count; ++i) theta_[at + i] = rng.uniform(-bound, bound);
    };
    fill(lay.emb, static_cast<std::int64_t>(lay.d) * lay.v, lay.d);
    fill(lay.enc0b, lay.d, lay.p);
    fill(lay.enc1w, static_cast<std::int64_t>(lay.d) * lay.p, lay.p);
    fill(lay.enc1b, lay.d, lay.p);
    fill(lay.enc2w, static_cast<std::int64_t>(lay.d) * 2 * lay.p, 2 * lay.p);
    fill(lay.enc2b, lay.d, 2 * lay.p);
    fill(lay.t1w, static_cast<std::int64_t>(lay.h1) * lay.in, lay.in);
    fill(lay.t1b, lay.h1, lay.in);
    fill(lay.t2w, static_cast<std::int64_t>(lay.h2) * lay.h1, lay.h1);
    fill(lay.t2b, lay.h2, lay.h1);
    fill(lay.hw, static_cast<std::int64_t>(lay.o) * lay.h2, lay.h2);
    fill(lay.hb, lay.o, lay.h2);
    round_to_float(theta_);
}

ScorerParameters::ScorerParameters(const ScorerConfig& config, Eigen::VectorXd theta)
    : config_(config), theta_(std::move(theta)) {
    config_.validate();
    if (theta_.size() != Layout(config_).total) {
        throw std::invalid_argument("ScorerParameters: parameter vector size mismatch");
    }
}

#define AQMM_PARAM_MAT(name, at, rows, cols)                               \
    ScorerParameters::ConstMat ScorerParameters::name() const {            \
        const Layout lay(config_);                                         \
        return ConstMat(theta_.data() + lay.at, lay.rows, lay.cols);       \
    }
#define AQMM_PARAM_VEC(name, at, rows)                                     \
    ScorerParameters::ConstVec ScorerParameters::name() const {            \
        const Layout lay(config_);                                         \
        return ConstVec(theta_.data() + lay.at, lay.rows);                 \
    }

AQMM_PARAM_MAT(embedding, emb, d, v)
AQMM_PARAM_VEC(enc0_bias, enc0b, d)
AQMM_PARAM_MAT(enc1_weight, enc1w, d, p)
AQMM_PARAM_VEC(enc1_bias, enc1b, d)
ScorerParameters::ConstMat ScorerParameters::enc2_weight() const {
    const Layout lay(config_);
    return ConstMat(theta_.data() + lay.enc2w, lay.d, 2 * lay.p);
}
AQMM_PARAM_VEC(enc2_bias, enc2b, d)
AQMM_PARAM_MAT(trunk1_weight, t1w, h1, in)
AQMM_PARAM_VEC(trunk1_bias, t1b, h1)
AQMM_PARAM_MAT(trunk2_weight, t2w, h2, h1)
AQMM_PARAM_VEC(trunk2_bias, t2b, h2)
AQMM_PARAM_MAT(head_weight, hw, o, h2)
AQMM_PARAM_VEC(head_bias, hb, o)

#undef AQMM_PARAM_MAT
#undef AQMM_PARAM_VEC

AdamState::AdamState(std::int64_t n_params, const AdamConfig& config)
    : config_(config), m_(Eigen::VectorXd::Zero(n_params)), v_(Eigen::VectorXd::Zero(n_params)) {}

void AdamState::apply(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    if (grad.size() != m_.size() || theta.size() != m_.size()) {
        throw std::invalid_argument("AdamState: size mismatch");
    }
    ++step_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    theta.array() -=
        config_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + config_.eps);
    round_to_float(theta);
}

namespace {

// Shared forward state for one batch; samples are columns, grouped by step:
// columns [0,B) are step 0, [B,2B) step 1, [2B,3B) step 2.
struct Forward {
    Eigen::MatrixXd px, pxy;  // positional encodings (p x B, 2p x B)
    Eigen::MatrixXd x;        // trunk input, in x 3B
    Eigen::MatrixXd z1, a1, z2, a2, logits;
};

void run_forward(const ScorerParameters& params, const ToyBatch& batch, Forward& f) {
    const ScorerConfig& cfg = params.config();
    const int b = static_cast<int>(batch.samples.size());
    const int d = cfg.context_dim;
    const int p = cfg.penc_dim();
    const int r = 3 * b;

    f.px.resize(p, b);
    f.pxy.resize(2 * p, b);
    for (int i = 0; i < b; ++i) {
        const ToySample& s = batch.samples[i];
        if (s.viewpoint < 0 || s.viewpoint >= cfg.viewpoints) {
            throw std::invalid_argument("scorer: unknown viewpoint id");
        }
        f.px.col(i) = positional_encode(s.q.x(), cfg.penc_frequencies);
        f.pxy.col(i).head(p) = f.px.col(i);
        f.pxy.col(i).tail(p) = positional_encode(s.q.y(), cfg.penc_frequencies);
    }

    f.x.setZero(cfg.trunk_input_dim(), r);
    for (int i = 0; i < b; ++i) {
        const auto ctx = params.embedding().col(batch.samples[i].viewpoint);
        f.x.col(i).head(d) = ctx;
        f.x.col(b + i).head(d) = ctx;
        f.x.col(2 * b + i).head(d) = ctx;
    }
    f.x.block(d, 0, d, b).colwise() = params.enc0_bias();
    f.x.block(d, b, d, b) = params.enc1_weight() * f.px;
    f.x.block(d, b, d, b).colwise() += params.enc1_bias();
    f.x.block(d, 2 * b, d, b) = params.enc2_weight() * f.pxy;
    f.x.block(d, 2 * b, d, b).colwise() += params.enc2_bias();
    for (int s = 0; s < 3; ++s) {
        f.x.block(2 * d + s, s * b, 1, b).setOnes();
    }

    f.z1.noalias() = params.trunk1_weight() * f.x;
    f.z1.colwise() += params.trunk1_bias();
    f.a1 = gelu(f.z1.array());
    f.z2.noalias() = params.trunk2_weight() * f.a1;
    f.z2.colwise() += params.trunk2_bias();
    f.a2 = gelu(f.z2.array());
    f.logits.noalias() = params.head_weight() * f.a2;
    f.logits.colwise() += params.head_bias();
}

// Cross-entropy over the legal segment of one logit column. Adds the
// gradient into dcol when given.
double range_cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int label,
                           const LegalRange& range, Eigen::Ref<Eigen::VectorXd>* dcol) {
    if (!range.contains(label)) {
        throw std::logic_error("scorer: true bin is masked (mask soundness violated)");
    }
    const auto seg = logits.segment(range.lo, range.count());
    const double m = seg.maxCoeff();
    const Eigen::ArrayXd e = (seg.array() - m).exp();
    const double z = e.sum();
    const double loss = m + std::log(z) - logits[label];
    if (dcol != nullptr) {
        dcol->segment(range.lo, range.count()) = e / z;
        (*dcol)[label] -= 1.0;
    }
    return loss;
}

double mog_row_loss(const Eigen::Ref<const Eigen::VectorXd>& out, double s, int k,
                    Eigen::Ref<Eigen::VectorXd>* dcol) {
    const auto a = out.head(k);
    const auto mu = out.segment(k, k);
    const auto t = out.tail(k);
    const double am = a.maxCoeff();
    const Eigen::ArrayXd ea = (a.array() - am).exp();
    const double za = ea.sum();
    const Eigen::ArrayXd log_w = a.array() - am - std::log(za);
    const Eigen::ArrayXd sigma = t.array().exp();
    const Eigen::ArrayXd zed = (s - mu.array()) / sigma;
    const Eigen::ArrayXd g = log_w - 0.5 * zed.square() - t.array() - 0.5 * kLog2Pi;
    const double gm = g.maxCoeff();
    const Eigen::ArrayXd eg = (g - gm).exp();
    const double zg = eg.sum();
    const double loss = -(gm + std::log(zg));
    if (dcol != nullptr) {
        const Eigen::ArrayXd resp = eg / zg;        // posterior responsibilities
        const Eigen::ArrayXd w = ea / za;           // mixture weights
        dcol->head(k) = w - resp;
        dcol->segment(k, k) = -resp * zed / sigma;
        dcol->tail(k) = -resp * (zed.square() - 1.0);
    }
    return loss;
}

double batch_loss_impl(const ScorerParameters& params, const ToyBatch& batch,
                       Eigen::VectorXd* grad_out) {
    const ScorerConfig& cfg = params.config();
    const int b = static_cast<int>(batch.samples.size());
    if (b == 0) throw std::invalid_argument("scorer: empty batch");
    const BinPartition partition(cfg.n_bins);
    const Layout lay(cfg);

    Forward f;
    run_forward(params, batch, f);

    Eigen::MatrixXd dlogits;
    if (grad_out != nullptr) dlogits.setZero(lay.o, 3 * b);

    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const ToySample& s = batch.samples[i];
        if (cfg.head == HeadKind::binned) {
            const QuaternionSentence sent = partition.sentence_of(s.q);
            const double mm_x = partition.min_magnitude_sq(sent.x);
            const double mm_y = partition.min_magnitude_sq(sent.y);
            const LegalRange full{0, cfg.n_bins - 1};
            const LegalRange r1 = partition.legal_range_for_budget(1.0 - mm_x);
            const LegalRange r2 = partition.legal_range_for_budget(1.0 - mm_x - mm_y);
            for (int step = 0; step < 3; ++step) {
                const int col = step * b + i;
                const LegalRange& range = step == 0 ? full : (step == 1 ? r1 : r2);
                if (grad_out != nullptr) {
                    Eigen::Ref<Eigen::VectorXd> dcol = dlogits.col(col);
                    loss += range_cross_entropy(f.logits.col(col), sent.label(step), range, &dcol);
                } else {
                    loss += range_cross_entropy(f.logits.col(col), sent.label(step), range, nullptr);
                }
            }
        } else {
            const auto u = mog_component_bounds(s.q);
            const std::array<double, 3> comp = {s.q.x(), s.q.y(), s.q.z()};
            for (int step = 0; step < 3; ++step) {
                const double target = mog_s_of_q(comp[step], u[step]);
                const int col = step * b + i;
                if (grad_out != nullptr) {
                    Eigen::Ref<Eigen::VectorXd> dcol = dlogits.col(col);
                    loss += mog_row_loss(f.logits.col(col), target, cfg.mog_components, &dcol);
                } else {
                    loss += mog_row_loss(f.logits.col(col), target, cfg.mog_components, nullptr);
                }
            }
        }
    }
    loss /= b;

    if (grad_out == nullptr) return loss;

    grad_out->setZero(lay.total);
    const int d = lay.d;
    using Mat = Eigen::Map<Eigen::MatrixXd>;
    using Vec = Eigen::Map<Eigen::VectorXd>;
    double* g = grad_out->data();

    // head
    Mat(g + lay.hw, lay.o, lay.h2).noalias() = dlogits * f.a2.transpose();
    Vec(g + lay.hb, lay.o) = dlogits.rowwise().sum();
    Eigen::MatrixXd da2 = params.head_weight().transpose() * dlogits;
    Eigen::MatrixXd dz2 = da2.array() * gelu_grad(f.z2.array());
    // trunk 2
    Mat(g + lay.t2w, lay.h2, lay.h1).noalias() = dz2 * f.a1.transpose();
    Vec(g + lay.t2b, lay.h2) = dz2.rowwise().sum();
    Eigen::MatrixXd da1 = params.trunk2_weight().transpose() * dz2;
    Eigen::MatrixXd dz1 = da1.array() * gelu_grad(f.z1.array());
    // trunk 1
    Mat(g + lay.t1w, lay.h1, lay.in).noalias() = dz1 * f.x.transpose();
    Vec(g + lay.t1b, lay.h1) = dz1.rowwise().sum();
    Eigen::MatrixXd dx = params.trunk1_weight().transpose() * dz1;

    // input blocks
    Mat gemb(g + lay.emb, d, lay.v);
    for (int i = 0; i < b; ++i) {
        gemb.col(batch.samples[i].viewpoint) +=
            dx.col(i).head(d) + dx.col(b + i).head(d) + dx.col(2 * b + i).head(d);
    }
    Vec(g + lay.enc0b, d) = dx.block(d, 0, d, b).rowwise().sum();
    Mat(g + lay.enc1w, d, lay.p).noalias() = dx.block(d, b, d, b) * f.px.transpose();
    Vec(g + lay.enc1b, d) = dx.block(d, b, d, b).rowwise().sum();
    Mat(g + lay.enc2w, d, 2 * lay.p).noalias() = dx.block(d, 2 * b, d, b) * f.pxy.transpose();
    Vec(g + lay.enc2b, d) = dx.block(d, 2 * b, d, b).rowwise().sum();

    *grad_out /= static_cast<double>(b);
    return loss;
}

// Single decode row sharing the batched math.
Eigen::VectorXd forward_row(const ScorerParameters& params, const Eigen::VectorXd& ctx,
                            int step, std::span<const double> prev) {
    const ScorerConfig& cfg = params.config();
    if (step < 0 || step > 2 || static_cast<int>(prev.size()) != step) {
        throw std::invalid_argument("scorer: step index must match previous-component count");
    }
    const int d = cfg.context_dim;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cfg.trunk_input_dim());
    x.head(d) = ctx;
    if (step == 0) {
        x.segment(d, d) = params.enc0_bias();
    } else if (step == 1) {
        x.segment(d, d) = params.enc1_weight() * positional_encode(prev[0], cfg.penc_frequencies) +
                          params.enc1_bias();
    } else {
        Eigen::VectorXd pxy(2 * cfg.penc_dim());
        pxy.head(cfg.penc_dim()) = positional_encode(prev[0], cfg.penc_frequencies);
        pxy.tail(cfg.penc_dim()) = positional_encode(prev[1], cfg.penc_frequencies);
        x.segment(d, d) = params.enc2_weight() * pxy + params.enc2_bias();
    }
    x[2 * d + step] = 1.0;

    const Eigen::VectorXd z1 = params.trunk1_weight() * x + params.trunk1_bias();
    const Eigen::VectorXd a1 = gelu(z1.array());
    const Eigen::VectorXd z2 = params.trunk2_weight() * a1 + params.trunk2_bias();
    const Eigen::VectorXd a2 = gelu(z2.array());
    return params.head_weight() * a2 + params.head_bias();
}

Eigen::VectorXd viewpoint_context(const ScorerParameters& params, int viewpoint) {
    if (viewpoint < 0 || viewpoint >= params.config().viewpoints) {
        throw std::invalid_argument("scorer: unknown viewpoint id");
    }
    return params.embedding().col(viewpoint);
}

}  // namespace

Eigen::VectorXd score_step_with_context(const ScorerParameters& params,
                                        const Eigen::VectorXd& context, int step,
                                        std::span<const double> prev) {
    if (params.config().head != HeadKind::binned) {
        throw std::invalid_argument("score_step: model does not have a binned head");
    }
    return forward_row(params, context, step, prev);
}

MoGHeadOutput score_step_mog_with_context(const ScorerParameters& params,
                                          const Eigen::VectorXd& context, int step,
                                          std::span<const double> prev) {
    if (params.config().head != HeadKind::mog) {
        throw std::invalid_argument("score_step_mog: model does not have a mog head");
    }
    const Eigen::VectorXd out = forward_row(params, context, step, prev);
    const int k = params.config().mog_components;
    MoGHeadOutput head;
    const Eigen::ArrayXd a = out.head(k).array();
    const double m = a.maxCoeff();
    const Eigen::ArrayXd e = (a - m).exp();
    head.weights = e / e.sum();
    head.means = out.segment(k, k);
    head.log_scales = out.tail(k);
    return head;
}

Eigen::VectorXd score_step(const ScorerParameters& params, int viewpoint, int step,
                           std::span<const double> prev) {
    return score_step_with_context(params, viewpoint_context(params, viewpoint), step, prev);
}

MoGHeadOutput score_step_mog(const ScorerParameters& params, int viewpoint, int step,
                             std::span<const double> prev) {
    return score_step_mog_with_context(params, viewpoint_context(params, viewpoint), step, prev);
}

Eigen::VectorXd masked_log_probs(const Eigen::VectorXd& logits, const LegalityMask& mask) {
    if (mask.size() != logits.size()) {
        throw std::invalid_argument("masked_log_probs: mask size mismatch");
    }
    double m = kNegInf;
    for (int i = 0; i < logits.size(); ++i) {
        if (!mask.is_illegal(i)) m = std::max(m, logits[i]);
    }
    if (!std::isfinite(m)) {
        throw std::invalid_argument("masked_log_probs: every bin is illegal");
    }
    double z = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        if (!mask.is_illegal(i)) z += std::exp(logits[i] - m);
    }
    const double lse = m + std::log(z);
    Eigen::VectorXd out = Eigen::VectorXd::Constant(logits.size(), kNegInf);
    for (int i = 0; i < logits.size(); ++i) {
        if (!mask.is_illegal(i)) out[i] = logits[i] - lse;
    }
    return out;
}

Eigen::VectorXd masked_log_probs(const Eigen::VectorXd& logits, const LegalRange& range) {
    if (range.lo < 0 || range.hi >= logits.size() || range.count() < 1) {
        throw std::invalid_argument("masked_log_probs: empty or out-of-range legal range");
    }
    const auto seg = logits.segment(range.lo, range.count());
    const double m = seg.maxCoeff();
    const double lse = m + std::log((seg.array() - m).exp().sum());
    Eigen::VectorXd out = Eigen::VectorXd::Constant(logits.size(), kNegInf);
    out.segment(range.lo, range.count()) = seg.array() - lse;
    return out;
}

double batch_loss(const ScorerParameters& params, const ToyBatch& batch) {
    return batch_loss_impl(params, batch, nullptr);
}

Eigen::VectorXd batch_sentence_log_probs(const ScorerParameters& params, const ToyBatch& batch) {
    const ScorerConfig& cfg = params.config();
    if (cfg.head != HeadKind::binned) {
        throw std::invalid_argument("batch_sentence_log_probs: model does not have a binned head");
    }
    const int b = static_cast<int>(batch.samples.size());
    if (b == 0) throw std::invalid_argument("scorer: empty batch");
    const BinPartition partition(cfg.n_bins);

    Forward f;
    run_forward(params, batch, f);

    Eigen::VectorXd out(b);
    for (int i = 0; i < b; ++i) {
        const QuaternionSentence sent = partition.sentence_of(batch.samples[i].q);
        const double mm_x = partition.min_magnitude_sq(sent.x);
        const double mm_y = partition.min_magnitude_sq(sent.y);
        const LegalRange full{0, cfg.n_bins - 1};
        const LegalRange r1 = partition.legal_range_for_budget(1.0 - mm_x);
        const LegalRange r2 = partition.legal_range_for_budget(1.0 - mm_x - mm_y);
        double lm = 0.0;
        for (int step = 0; step < 3; ++step) {
            const LegalRange& range = step == 0 ? full : (step == 1 ? r1 : r2);
            lm -= range_cross_entropy(f.logits.col(step * b + i), sent.label(step), range, nullptr);
        }
        out[i] = lm;
    }
    return out;
}

double batch_loss_and_grad(const ScorerParameters& params, const ToyBatch& batch,
                           Eigen::VectorXd& grad) {
    return batch_loss_impl(params, batch, &grad);
}

double training_step(ScorerParameters& params, AdamState& adam, const ToyBatch& batch) {
    Eigen::VectorXd grad;
    const double loss = batch_loss_and_grad(params, batch, grad);
    if (!std::isfinite(loss)) {
        throw std::runtime_error("training_step: non-finite loss (batch of " +
                                 std::to_string(batch.samples.size()) + " at Adam step " +
                                 std::to_string(adam.step()) + ")");
    }
    adam.apply(params.mutable_flat(), grad);
    return loss;
}

double validation_nll(const ScorerParameters& params, const ToyModeSet& mode_set,
                      const TrainConfig& train_config, std::uint64_t seed) {
    ToySampleStream val_stream(mode_set, derive_seed(seed, 2));
    std::vector<ToySample> val_set;
    val_set.reserve(train_config.val_samples);
    for (int i = 0; i < train_config.val_samples; ++i) val_set.push_back(val_stream.next());

    // Chunked so the logits matrix stays small.
    const int chunk = std::min(train_config.batch_size, 512);
    double total = 0.0;
    int done = 0;
    while (done < static_cast<int>(val_set.size())) {
        const int n = std::min<int>(chunk, static_cast<int>(val_set.size()) - done);
        ToyBatch vb;
        vb.samples.assign(val_set.begin() + done, val_set.begin() + done + n);
        total += batch_loss(params, vb) * n;
        done += n;
    }
    return total / static_cast<double>(val_set.size());
}

TrainResult train_scorer(const ScorerConfig& config, const ToyModeSet& mode_set,
                         const TrainConfig& train_config, std::uint64_t seed) {
    config.validate();
    if (train_config.batch_size < 1 || train_config.epoch_samples < 1 ||
        train_config.max_epochs < 1 || train_config.patience < 1 ||
        train_config.val_samples < 1) {
        throw std::invalid_argument("train_scorer: invalid training configuration");
    }

    Rng init_rng(derive_seed(seed, 0));
    ScorerParameters params(config, init_rng);
    AdamState adam(config.parameter_count(), AdamConfig{.lr = train_config.lr});

    ToySampleStream train_stream(mode_set, derive_seed(seed, 1));

    TrainLog log;
    log.best_val_nll = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta = params.flat();
    int epochs_since_improve = 0;
    int halvings_in_row = 0;

    for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
        double train_total = 0.0;
        int remaining = train_config.epoch_samples;
        while (remaining > 0) {
            const int n = std::min(train_config.batch_size, remaining);
            ToyBatch batch;
            batch.samples.reserve(n);
            for (int i = 0; i < n; ++i) batch.samples.push_back(train_stream.next());
            train_total += training_step(params, adam, batch) * n;
            remaining -= n;
        }
        const double train_nll = train_total / train_config.epoch_samples;
        const double val_nll = validation_nll(params, mode_set, train_config, seed);
        log.epochs.push_back(EpochRecord{epoch, train_nll, val_nll, adam.lr()});

        if (val_nll < log.best_val_nll) {
            log.best_val_nll = val_nll;
            log.best_epoch = epoch;
            best_theta = params.flat();
            epochs_since_improve = 0;
            halvings_in_row = 0;
        } else if (++epochs_since_improve >= train_config.patience) {
            adam.halve_lr();
            ++log.total_halvings;
            ++halvings_in_row;
            epochs_since_improve = 0;
            if (halvings_in_row >= train_config.max_halvings) break;
        }
    }

    return TrainResult{ScorerParameters(config, std::move(best_theta)), std::move(log)};
}

}  // namespace aqmm
