#pragma once

// Spectrum network: a 4-layer perceptron that maps a realified beam vector
// [Re(y); Im(y)] (length 2 N_ch) to L spectrum magnitudes, trained against
// IAA labels with Adam and hand-written backpropagation.
//
// Per-vector scaling: alpha = max_k |a_k^H y| / N_ch. Training pairs are
// (realify(y / alpha), |s_iaa| / alpha). The SNR-weighted loss multiplies each
// sample's mean squared error by its alpha.

#include "srspec/array_model.hpp"
#include "srspec/iaa.hpp"
#include "srspec/io.hpp"
#include "srspec/latency.hpp"

#include "json.hpp"

#include <array>
#include <functional>
#include <numeric>
#include <optional>
#include <random>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace srspec {

inline constexpr std::array<std::size_t, 3> kHiddenWidths{2048, 1024, 512};

enum class LossKind { mse, snr_weighted };

inline std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "snr_weighted"; }

inline LossKind loss_from_string(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "snr_weighted" || s == "snr") return LossKind::snr_weighted;
  throw ValidationError("unknown loss kind '" + s + "' (expected mse or snr_weighted)");
}

/// Weights and biases of the four affine layers. Also used for gradients and
/// Adam moments, which share the shapes.
template <typename Scalar>
struct MlpParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::array<Mat, 4> w;  // w[k] is out_k x in_k
  std::array<Vec, 4> b;

  static MlpParams zeros_like(const MlpParams& o) {
    MlpParams z;
    for (int k = 0; k < 4; ++k) {
      z.w[k] = Mat::Zero(o.w[k].rows(), o.w[k].cols());
      z.b[k] = Vec::Zero(o.b[k].size());
    }
    return z;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (int k = 0; k < 4; ++k) n += static_cast<std::size_t>(w[k].size() + b[k].size());
    return n;
  }

  /// Visits every scalar in file order: per layer, weights row-major, then biases.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (int k = 0; k < 4; ++k) {
      for (Eigen::Index r = 0; r < w[k].rows(); ++r)
        for (Eigen::Index c = 0; c < w[k].cols(); ++c) fn(w[k](r, c));
      for (Eigen::Index i = 0; i < b[k].size(); ++i) fn(b[k][i]);
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<MlpParams*>(this)->for_each([&](Scalar& v) { fn(static_cast<const Scalar&>(v)); });
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b2) {
    for (int k = 0; k < 4; ++k)
      if (a.w[k] != b2.w[k] || a.b[k] != b2.b[k]) return false;
    return true;
  }
};

template <typename Scalar>
class Mlp {
 public:
  using Mat = typename MlpParams<Scalar>::Mat;
  using Vec = typename MlpParams<Scalar>::Vec;

  Mlp() = default;

  /// Zero-initialized network with the given hidden widths.
  Mlp(std::size_t n_ch, std::size_t l, std::array<std::size_t, 3> hidden = kHiddenWidths) : n_ch_(n_ch), l_(l) {
    if (n_ch == 0 || l == 0) throw ValidationError("Mlp: n_ch and l must be positive");
    const std::array<std::size_t, 5> dims{2 * n_ch, hidden[0], hidden[1], hidden[2], l};
    for (int k = 0; k < 4; ++k) {
      params_.w[k] = Mat::Zero(static_cast<Eigen::Index>(dims[k + 1]), static_cast<Eigen::Index>(dims[k]));
      params_.b[k] = Vec::Zero(static_cast<Eigen::Index>(dims[k + 1]));
    }
  }

  /// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases. The
  /// output layer is scaled by 1/10: labels are mostly near zero, and a
  /// full-scale linear output layer starts far from them and trains slowly.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int k = 0; k < 4; ++k) {
      const double bound = (k == 3 ? 0.1 : 1.0) * std::sqrt(6.0 / static_cast<double>(params_.w[k].cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index r = 0; r < params_.w[k].rows(); ++r)
        for (Eigen::Index c = 0; c < params_.w[k].cols(); ++c) params_.w[k](r, c) = static_cast<Scalar>(dist(rng));
      params_.b[k].setZero();
    }
  }

  std::size_t n_ch() const { return n_ch_; }
  std::size_t l() const { return l_; }
  std::size_t input_size() const { return 2 * n_ch_; }
  std::array<std::size_t, 5> dims() const {
    return {2 * n_ch_, static_cast<std::size_t>(params_.w[0].rows()), static_cast<std::size_t>(params_.w[1].rows()),
            static_cast<std::size_t>(params_.w[2].rows()), l_};
  }
  std::size_t parameter_count() const { return params_.count(); }

  MlpParams<Scalar>& params() { return params_; }
  const MlpParams<Scalar>& params() const { return params_; }

  /// Columns of `x` are inputs; columns of the result are outputs.
  Mat forward_batch(const Mat& x) const {
    if (static_cast<std::size_t>(x.rows()) != input_size())
      throw ValidationError("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                            std::to_string(input_size()));
    Mat h = x;
    for (int k = 0; k < 4; ++k) {
      Mat z = params_.w[k] * h;
      z.colwise() += params_.b[k];
      if (k < 3) z = z.cwiseMax(Scalar(0));
      h = std::move(z);
    }
    return h;
  }

  Vec forward(const Vec& x) const {
    if (static_cast<std::size_t>(x.size()) != input_size())
      throw ValidationError("Mlp::forward: input has " + std::to_string(x.size()) + " elements, expected " +
                            std::to_string(input_size()));
    Vec h = x;
    for (int k = 0; k < 4; ++k) {
      Vec z = params_.w[k] * h + params_.b[k];
      if (k < 3) z = z.cwiseMax(Scalar(0));
      h = std::move(z);
    }
    return h;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.n_ch_ == b.n_ch_ && a.l_ == b.l_ && a.params_ == b.params_;
  }

 private:
  std::size_t n_ch_ = 0;
  std::size_t l_ = 0;
  MlpParams<Scalar> params_;
};

// ---------------------------------------------------------------------------
// Normalization and records

/// [Re(y); Im(y)].
inline RVector realify(const BeamVector& y) {
  RVector out(2 * y.size());
  out.head(y.size()) = y.real();
  out.tail(y.size()) = y.imag();
  return out;
}

inline BeamVector complexify(const RVector& x) {
  const Eigen::Index n = x.size() / 2;
  BeamVector y(n);
  y.real() = x.head(n);
  y.imag() = x.tail(n);
  return y;
}

inline double normalization_factor(const SteeringMatrix& a, const BeamVector& y) {
  return dbf_spectrum(a, y).cwiseAbs().maxCoeff();
}

struct SampleRecord {
  RVector input;  // realify(y / alpha)
  RVector label;  // |s_iaa| / alpha
  double alpha = 0.0;
};

/// Returns nullopt when alpha == 0 (the record is rejected, not an error).
inline std::optional<SampleRecord> make_record(const SteeringMatrix& a, const BeamVector& y, const IaaResult& label) {
  if (static_cast<std::size_t>(label.coeffs.size()) != a.l())
    throw ValidationError("make_record: IAA label length does not match the grid");
  const double alpha = normalization_factor(a, y);
  if (!(alpha > 0.0)) return std::nullopt;
  SampleRecord rec;
  rec.input = realify(y / alpha);
  rec.label = label.coeffs.cwiseAbs() / alpha;
  rec.alpha = alpha;
  return rec;
}

// ---------------------------------------------------------------------------
// Loss and gradients

inline double loss(const RVector& pred, const RVector& label, double alpha, LossKind kind) {
  if (pred.size() != label.size()) throw ValidationError("loss: length mismatch");
  if (pred.size() == 0) return 0.0;
  const double mse = (pred - label).squaredNorm() / static_cast<double>(pred.size());
  return kind == LossKind::snr_weighted ? alpha * mse : mse;
}

/// Columnar view of a set of records in the network's scalar type.
template <typename Scalar>
struct Batch {
  typename MlpParams<Scalar>::Mat inputs;  // 2 N_ch x B
  typename MlpParams<Scalar>::Mat labels;  // L x B
  typename MlpParams<Scalar>::Vec alphas;  // B

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

template <typename Scalar>
Batch<Scalar> make_batch(const std::vector<SampleRecord>& records) {
  if (records.empty()) throw ValidationError("make_batch: empty record set");
  const auto in = records.front().input.size();
  const auto l = records.front().label.size();
  Batch<Scalar> b;
  const auto n = static_cast<Eigen::Index>(records.size());
  b.inputs.resize(in, n);
  b.labels.resize(l, n);
  b.alphas.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    if (r.input.size() != in || r.label.size() != l) throw ValidationError("records do not share N_ch and L");
    b.inputs.col(i) = r.input.cast<Scalar>();
    b.labels.col(i) = r.label.cast<Scalar>();
    b.alphas[i] = static_cast<Scalar>(r.alpha);
  }
  return b;
}

/// Buffers reused across training steps: activations, deltas and gradients.
template <typename Scalar>
struct GradWorkspace {
  using Mat = typename MlpParams<Scalar>::Mat;
  std::array<Mat, 3> act;  // act[k] is the output of hidden layer k
  Mat out, delta, back;
  MlpParams<Scalar> grads;
};

/// Mean-over-batch loss; the exact gradient is left in ws.grads. ReLU'(0) is taken as 0.
template <typename Scalar>
double loss_and_gradients(const Mlp<Scalar>& model, const typename MlpParams<Scalar>::Mat& inputs,
                          const typename MlpParams<Scalar>::Mat& labels, const typename MlpParams<Scalar>::Vec& alphas,
                          LossKind kind, GradWorkspace<Scalar>& ws) {
  const auto& p = model.params();
  const Eigen::Index bsz = inputs.cols();
  if (bsz == 0) throw ValidationError("backward: empty batch");
  if (static_cast<std::size_t>(inputs.rows()) != model.input_size() ||
      static_cast<std::size_t>(labels.rows()) != model.l() || labels.cols() != bsz || alphas.size() != bsz)
    throw ValidationError("backward: batch shape does not match the model");

  auto layer_in = [&](int k) -> const auto& { return k == 0 ? inputs : ws.act[static_cast<std::size_t>(k - 1)]; };
  for (int k = 0; k < 3; ++k) {
    auto& a = ws.act[static_cast<std::size_t>(k)];
    a.noalias() = p.w[k] * layer_in(k);
    a.colwise() += p.b[k];
    a = a.cwiseMax(Scalar(0));
  }
  ws.out.noalias() = p.w[3] * ws.act[2];
  ws.out.colwise() += p.b[3];

  auto& delta = ws.delta;
  delta = ws.out - labels;
  const Scalar inv_l = Scalar(1) / static_cast<Scalar>(labels.rows());
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(bsz);
  double total = 0.0;
  for (Eigen::Index j = 0; j < bsz; ++j) {
    const Scalar weight = kind == LossKind::snr_weighted ? alphas[j] : Scalar(1);
    total += static_cast<double>(weight) * static_cast<double>(delta.col(j).squaredNorm() * inv_l);
    delta.col(j) *= Scalar(2) * weight * inv_l * inv_b;
  }

  auto& g = ws.grads;
  for (int k = 3; k >= 0; --k) {
    g.w[k].noalias() = delta * layer_in(k).transpose();
    g.b[k].noalias() = delta.rowwise().sum();
    if (k > 0) {
      ws.back.noalias() = p.w[k].transpose() * delta;
      const auto& a = ws.act[static_cast<std::size_t>(k - 1)];
      delta = ws.back.cwiseProduct((a.array() > Scalar(0)).template cast<Scalar>().matrix());
    }
  }
  return total / static_cast<double>(bsz);
}

template <typename Scalar>
std::pair<double, MlpParams<Scalar>> loss_and_gradients(const Mlp<Scalar>& model,
                                                        const typename MlpParams<Scalar>::Mat& inputs,
                                                        const typename MlpParams<Scalar>::Mat& labels,
                                                        const typename MlpParams<Scalar>::Vec& alphas, LossKind kind) {
  GradWorkspace<Scalar> ws;
  const double value = loss_and_gradients(model, inputs, labels, alphas, kind, ws);
  return {value, std::move(ws.grads)};
}

template <typename Scalar>
MlpParams<Scalar> backward(const Mlp<Scalar>& model, const std::vector<SampleRecord>& batch, LossKind kind) {
  const auto b = make_batch<Scalar>(batch);
  return loss_and_gradients(model, b.inputs, b.labels, b.alphas, kind).second;
}

template <typename Scalar>
double batch_loss(const Mlp<Scalar>& model, const Batch<Scalar>& b, LossKind kind) {
  const auto out = model.forward_batch(b.inputs);
  double total = 0.0;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double mse =
        static_cast<double>((out.col(j) - b.labels.col(j)).squaredNorm()) / static_cast<double>(out.rows());
    total += kind == LossKind::snr_weighted ? static_cast<double>(b.alphas[j]) * mse : mse;
  }
  return total / static_cast<double>(out.cols());
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 500;
  std::size_t batch_size = 1024;
  LossKind loss_kind = LossKind::snr_weighted;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables
  // Rotates every training input by a random global phase each epoch. Labels
  // and alpha are unchanged by such a rotation, so this is exact augmentation.
  bool augment_phase = false;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
    if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw ValidationError("train: Adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("train: epsilon must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
       {"loss_kind", to_string(c.loss_kind)}, {"beta1", c.beta1}, {"beta2", c.beta2},
       {"epsilon", c.epsilon}, {"seed", c.seed}, {"checkpoint_every", c.checkpoint_every},
       {"augment_phase", c.augment_phase}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.loss_kind = loss_from_string(j.value("loss_kind", to_string(d.loss_kind)));
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.augment_phase = j.value("augment_phase", d.augment_phase);
}

namespace detail {

/// Flushes denormals to zero for its lifetime. Adam's second moments decay
/// into the denormal range, where x86 arithmetic is many times slower.
struct FlushDenormals {
#if defined(__SSE__)
  unsigned saved = _mm_getcsr();
  FlushDenormals() { _mm_setcsr(saved | 0x8040u); }  // FTZ | DAZ
  ~FlushDenormals() { _mm_setcsr(saved); }
#else
  FlushDenormals() = default;
#endif
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;
};

}  // namespace detail

template <typename Scalar>
struct AdamState {
  MlpParams<Scalar> m, v;
  std::int64_t step = 0;
};

template <typename Scalar>
void adam_update(MlpParams<Scalar>& p, const MlpParams<Scalar>& g, AdamState<Scalar>& st, const TrainConfig& cfg) {
  ++st.step;
  const auto b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, static_cast<double>(st.step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, static_cast<double>(st.step)));
  const auto lr = static_cast<Scalar>(cfg.learning_rate), eps = static_cast<Scalar>(cfg.epsilon);
  // Cache-sized chunks keep the three passes over each array in L1.
  auto step = [&](auto& param, const auto& grad, auto& m, auto& v) {
    using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    constexpr Eigen::Index chunk = 1024;
    const Eigen::Index n = param.size();
    for (Eigen::Index i = 0; i < n; i += chunk) {
      const Eigen::Index c = std::min(chunk, n - i);
      Eigen::Map<Arr> pp(param.data() + i, c), mm(m.data() + i, c), vv(v.data() + i, c);
      const Eigen::Map<const Arr> gg(grad.data() + i, c);
      mm = b1 * mm + (Scalar(1) - b1) * gg;
      vv = b2 * vv + (Scalar(1) - b2) * gg.square();
      pp -= lr * (mm / c1) / ((vv / c2).sqrt() + eps);
    }
  };
  for (int k = 0; k < 4; ++k) {
    step(p.w[k], g.w[k], st.m.w[k], st.v.w[k]);
    step(p.b[k], g.b[k], st.m.b[k], st.v.b[k]);
  }
}

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
};

/// Everything needed to continue training where it stopped.
template <typename Scalar>
struct TrainState {
  Mlp<Scalar> model;
  AdamState<Scalar> adam;
  int epochs_done = 0;
  std::vector<EpochLog> log;
};

/// Initial state: model initialized from cfg.seed, zero Adam moments.
template <typename Scalar>
TrainState<Scalar> initial_train_state(std::size_t n_ch, std::size_t l, const TrainConfig& cfg,
                                       std::array<std::size_t, 3> hidden = kHiddenWidths) {
  TrainState<Scalar> st{Mlp<Scalar>(n_ch, l, hidden), {}, 0, {}};
  st.model.initialize(mix_seed(cfg.seed, 0));
  st.adam.m = MlpParams<Scalar>::zeros_like(st.model.params());
  st.adam.v = MlpParams<Scalar>::zeros_like(st.model.params());
  return st;
}

/// Runs epochs (state.epochs_done, cfg.epochs]. Each epoch visits the dataset
/// in a permutation seeded by (cfg.seed, epoch), so resuming from a saved state
/// reproduces an uninterrupted run. `on_epoch` fires after every epoch.
template <typename Scalar>
void train(TrainState<Scalar>& state, const Batch<Scalar>& data, const TrainConfig& cfg,
           const std::function<void(const TrainState<Scalar>&)>& on_epoch = {}) {
  cfg.validate();
  using Mat = typename MlpParams<Scalar>::Mat;
  using Vec = typename MlpParams<Scalar>::Vec;
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("train: empty dataset");
  if (static_cast<std::size_t>(data.inputs.rows()) != state.model.input_size() ||
      static_cast<std::size_t>(data.labels.rows()) != state.model.l())
    throw ValidationError("train: dataset shape does not match the model");

  const detail::FlushDenormals no_denormals;
  std::vector<Eigen::Index> order(n);
  Mat xb, yb;
  Vec ab;
  GradWorkspace<Scalar> ws;
  for (int epoch = state.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> phase(0.0, 1.0);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const auto c = static_cast<Eigen::Index>(count);
      xb.resize(data.inputs.rows(), c);
      yb.resize(data.labels.rows(), c);
      ab.resize(c);
      for (Eigen::Index j = 0; j < c; ++j) {
        const Eigen::Index src = order[start + static_cast<std::size_t>(j)];
        xb.col(j) = data.inputs.col(src);
        if (cfg.augment_phase) {
          const double phi = 2.0 * std::numbers::pi * phase(rng);
          const auto cs = static_cast<Scalar>(std::cos(phi)), sn = static_cast<Scalar>(std::sin(phi));
          const Eigen::Index h = xb.rows() / 2;
          const Vec re = xb.col(j).head(h), im = xb.col(j).tail(h);
          xb.col(j).head(h) = cs * re - sn * im;
          xb.col(j).tail(h) = sn * re + cs * im;
        }
        yb.col(j) = data.labels.col(src);
        ab[j] = data.alphas[src];
      }
      epoch_loss += loss_and_gradients(state.model, xb, yb, ab, cfg.loss_kind, ws) * static_cast<double>(count);
      adam_update(state.model.params(), ws.grads, state.adam, cfg);
    }
    state.log.push_back({epoch, epoch_loss / static_cast<double>(n)});
    state.epochs_done = epoch;
    if (on_epoch) on_epoch(state);
  }
}

// ---------------------------------------------------------------------------
// Inference

enum class InferMode { normalized, direct };

inline InferMode infer_mode_from_string(const std::string& s) {
  if (s == "normalized") return InferMode::normalized;
  if (s == "direct") return InferMode::direct;
  throw ValidationError("unknown inference mode '" + s + "' (expected normalized or direct)");
}

template <typename Scalar>
RVector infer_spectrum(const Mlp<Scalar>& model, const SteeringMatrix& a, const BeamVector& y,
                       InferMode mode = InferMode::normalized) {
  using Vec = typename MlpParams<Scalar>::Vec;
  if (model.n_ch() != a.n_ch() || model.l() != a.l())
    throw ValidationError("infer_spectrum: model shape does not match the steering matrix");
  if (mode == InferMode::direct)
    return model.forward(realify(y).template cast<Scalar>()).template cast<double>().cwiseMax(0.0);
  const double alpha = normalization_factor(a, y);
  if (!(alpha > 0.0)) return RVector::Zero(static_cast<Eigen::Index>(a.l()));
  const Vec x = realify(y / alpha).template cast<Scalar>();
  return (alpha * model.forward(x).template cast<double>()).cwiseMax(0.0);
}

/// Network as a spectrum estimator; batches all Doppler bins of a range row.
template <typename Scalar>
class NetworkEstimator {
 public:
  NetworkEstimator(const Mlp<Scalar>& model, const SteeringMatrix& a, InferMode mode = InferMode::normalized)
      : model_(&model), a_(&a), mode_(mode) {
    if (model.n_ch() != a.n_ch() || model.l() != a.l())
      throw ValidationError("NetworkEstimator: model is " + std::to_string(model.n_ch()) + " ch x " +
                            std::to_string(model.l()) + " bins, geometry is " + std::to_string(a.n_ch()) +
                            " ch x " + std::to_string(a.l()) + " bins");
  }
  std::size_t grid_size() const { return a_->l(); }
  RVector magnitude(const BeamVector& y) const { return infer_spectrum(*model_, *a_, y, mode_); }

  RMatrix magnitude_batch(const CMatrix& beams) const {
    using Mat = typename MlpParams<Scalar>::Mat;
    const Eigen::Index n = beams.rows(), b = beams.cols();
    RVector alpha = RVector::Ones(b);
    if (mode_ == InferMode::normalized)
      alpha = ((a_->entries.adjoint() * beams) / static_cast<double>(n)).cwiseAbs().colwise().maxCoeff().transpose();
    Mat x(2 * n, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const double s = alpha[j] > 0.0 ? 1.0 / alpha[j] : 0.0;
      x.col(j).head(n) = (beams.col(j).real() * s).template cast<Scalar>();
      x.col(j).tail(n) = (beams.col(j).imag() * s).template cast<Scalar>();
    }
    RMatrix out = model_->forward_batch(x).template cast<double>();
    for (Eigen::Index j = 0; j < b; ++j) {
      if (mode_ == InferMode::normalized && !(alpha[j] > 0.0))
        out.col(j).setZero();
      else if (mode_ == InferMode::normalized)
        out.col(j) *= alpha[j];
    }
    return out.cwiseMax(0.0);
  }

 private:
  const Mlp<Scalar>* model_;
  const SteeringMatrix* a_;
  InferMode mode_;
};

template <typename Scalar>
LatencyReport time_network(const Mlp<Scalar>& model, const SteeringMatrix& a, const std::vector<BeamVector>& vectors,
                           std::size_t batch = 1, std::size_t warmup = 10) {
  LatencyReport rep;
  rep.estimator = batch == 1 ? "network" : "network_batched";
  rep.n_ch = a.n_ch();
  rep.l = a.l();
  rep.batch = std::max<std::size_t>(batch, 1);
  rep.hardware = hardware_note();
  volatile double sink = 0.0;
  if (rep.batch == 1) {
    rep.samples_ms = time_each(vectors.size(), warmup, [&](std::size_t i) {
      sink = sink + infer_spectrum(model, a, vectors[i])[0];
    });
  } else {
    NetworkEstimator<Scalar> est(model, a);
    const std::size_t groups = vectors.size() / rep.batch;
    std::vector<CMatrix> mats(groups, CMatrix(static_cast<Eigen::Index>(a.n_ch()), static_cast<Eigen::Index>(rep.batch)));
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < rep.batch; ++j) mats[g].col(static_cast<Eigen::Index>(j)) = vectors[g * rep.batch + j];
    auto per_group = time_each(groups, std::min<std::size_t>(warmup, groups), [&](std::size_t g) {
      sink = sink + est.magnitude_batch(mats[g])(0, 0);
    });
    for (double ms : per_group) rep.samples_ms.push_back(ms / static_cast<double>(rep.batch));
  }
  summarize(rep);
  return rep;
}

// ---------------------------------------------------------------------------
// Files

/// JSON header line, then float32 parameters layer by layer (weights row-major, then biases).
template <typename Scalar>
void save_model(const std::filesystem::path& path, const Mlp<Scalar>& model, nlohmann::json extra = {}) {
  nlohmann::json h = extra.is_object() ? extra : nlohmann::json::object();
  h["format"] = "srspec-model";
  h["version"] = kVersion;
  h["dtype"] = "float32";
  h["n_ch"] = model.n_ch();
  h["l"] = model.l();
  const auto d = model.dims();
  h["dims"] = std::vector<std::size_t>(d.begin(), d.end());
  h["parameter_count"] = model.parameter_count();
  auto os = io::open_out(path);
  io::write_header(os, h);
  {
    io::F32Writer wr(os);
    model.params().for_each([&](const Scalar& v) { wr.put(static_cast<double>(v)); });
  }
  if (!os) throw DataError("failed writing " + path.string());
}

template <typename Scalar>
Mlp<Scalar> load_model(const std::filesystem::path& path, std::optional<std::size_t> expect_n_ch = std::nullopt,
                       std::optional<std::size_t> expect_l = std::nullopt, nlohmann::json* header_out = nullptr) {
  auto is = io::open_in(path);
  const auto h = io::read_header(is, path.string());
  if (h.value("format", "") != "srspec-model") throw DataError(path.string() + ": not a model file");
  std::vector<std::size_t> dims;
  try {
    dims = h.at("dims").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": header lacks dims: " + e.what());
  }
  if (dims.size() != 5 || dims[0] % 2 != 0 || dims[0] == 0) throw DataError(path.string() + ": malformed dims");
  const std::size_t n_ch = dims[0] / 2, l = dims[4];
  if (expect_n_ch && *expect_n_ch != n_ch)
    throw ValidationError(path.string() + ": model expects " + std::to_string(n_ch) + " channels (input dim " +
                          std::to_string(dims[0]) + "), found geometry with " + std::to_string(*expect_n_ch));
  if (expect_l && *expect_l != l)
    throw ValidationError(path.string() + ": model outputs " + std::to_string(l) + " grid points, expected " +
                          std::to_string(*expect_l));
  Mlp<Scalar> model(n_ch, l, {dims[1], dims[2], dims[3]});
  const auto values = io::read_f32(is, model.parameter_count(), path.string());
  io::expect_eof(is, path.string());
  std::size_t i = 0;
  model.params().for_each([&](Scalar& v) { v = static_cast<Scalar>(values[i++]); });
  if (header_out) *header_out = h;
  return model;
}

/// Training checkpoint: model, Adam moments and epoch counter.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const TrainState<Scalar>& st, const TrainConfig& cfg) {
  nlohmann::json h;
  h["format"] = "srspec-checkpoint";
  h["version"] = kVersion;
  h["n_ch"] = st.model.n_ch();
  h["l"] = st.model.l();
  const auto d = st.model.dims();
  h["dims"] = std::vector<std::size_t>(d.begin(), d.end());
  h["epochs_done"] = st.epochs_done;
  h["adam_step"] = st.adam.step;
  h["train_config"] = cfg;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : st.log) log.push_back({e.epoch, e.train_loss});
  h["log"] = log;
  auto os = io::open_out(path);
  io::write_header(os, h);
  {
    io::F32Writer wr(os);
    auto put = [&](const Scalar& v) { wr.put(static_cast<double>(v)); };
    st.model.params().for_each(put);
    st.adam.m.for_each(put);
    st.adam.v.for_each(put);
  }
  if (!os) throw DataError("failed writing " + path.string());
}

template <typename Scalar>
TrainState<Scalar> load_checkpoint(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  const auto h = io::read_header(is, path.string());
  if (h.value("format", "") != "srspec-checkpoint") throw DataError(path.string() + ": not a checkpoint file");
  const auto dims = h.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() != 5) throw DataError(path.string() + ": malformed dims");
  TrainState<Scalar> st{Mlp<Scalar>(dims[0] / 2, dims[4], {dims[1], dims[2], dims[3]}), {}, 0, {}};
  st.adam.m = MlpParams<Scalar>::zeros_like(st.model.params());
  st.adam.v = MlpParams<Scalar>::zeros_like(st.model.params());
  const std::size_t count = st.model.parameter_count();
  const auto values = io::read_f32(is, 3 * count, path.string());
  io::expect_eof(is, path.string());
  std::size_t i = 0;
  auto get = [&](Scalar& v) { v = static_cast<Scalar>(values[i++]); };
  st.model.params().for_each(get);
  st.adam.m.for_each(get);
  st.adam.v.for_each(get);
  st.epochs_done = h.at("epochs_done").get<int>();
  st.adam.step = h.at("adam_step").get<std::int64_t>();
  for (const auto& e : h.at("log")) st.log.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
  return st;
}

/// Record file: JSON header line, then per record float32 [input(2 N_ch) | label(L) | alpha].
inline void save_records(const std::filesystem::path& path, const std::vector<SampleRecord>& records, std::size_t n_ch,
                         std::size_t l, nlohmann::json extra = {}) {
  nlohmann::json h = extra.is_object() ? extra : nlohmann::json::object();
  h["format"] = "srspec-records";
  h["version"] = kVersion;
  h["dtype"] = "float32";
  h["n_ch"] = n_ch;
  h["l"] = l;
  h["count"] = records.size();
  auto os = io::open_out(path);
  io::write_header(os, h);
  {
    io::F32Writer wr(os);
    for (const auto& r : records) {
      if (static_cast<std::size_t>(r.input.size()) != 2 * n_ch || static_cast<std::size_t>(r.label.size()) != l)
        throw ValidationError("save_records: record shape does not match header");
      for (double v : r.input) wr.put(v);
      for (double v : r.label) wr.put(v);
      wr.put(r.alpha);
    }
  }
  if (!os) throw DataError("failed writing " + path.string());
}

struct RecordFile {
  nlohmann::json header;
  std::size_t n_ch = 0, l = 0;
  std::vector<SampleRecord> records;
};

inline RecordFile load_records(const std::filesystem::path& path) {
  auto is = io::open_in(path);
  RecordFile f;
  f.header = io::read_header(is, path.string());
  if (f.header.value("format", "") != "srspec-records") throw DataError(path.string() + ": not a record file");
  f.n_ch = f.header.at("n_ch").get<std::size_t>();
  f.l = f.header.at("l").get<std::size_t>();
  const auto count = f.header.at("count").get<std::size_t>();
  const std::size_t stride = 2 * f.n_ch + f.l + 1;
  const auto values = io::read_f32(is, stride * count, path.string());
  io::expect_eof(is, path.string());
  f.records.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float* p = values.data() + i * stride;
    auto& r = f.records[i];
    r.input = Eigen::Map<const Eigen::VectorXf>(p, static_cast<Eigen::Index>(2 * f.n_ch)).cast<double>();
    r.label = Eigen::Map<const Eigen::VectorXf>(p + 2 * f.n_ch, static_cast<Eigen::Index>(f.l)).cast<double>();
    r.alpha = p[stride - 1];
  }
  return f;
}

}  // namespace srspec
