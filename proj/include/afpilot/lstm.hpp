#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "afpilot/rng.hpp"
#include "afpilot/types.hpp"

namespace afpilot {

// ---------------------------------------------------------------------------
// Complex <-> real re-concatenation

/// [Re(y); Im(y)]
inline RVector reconcat(const CVector& y) {
  RVector a(2 * y.size());
  a.head(y.size()) = y.real();
  a.tail(y.size()) = y.imag();
  return a;
}

/// a[0..N) + j a[N..2N)
inline CVector reconstruct(const RVector& a) {
  if (a.size() % 2 != 0) throw ShapeError("reconstruct: odd-length real vector");
  const Eigen::Index n = a.size() / 2;
  CVector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = Complex(a(i), a(n + i));
  return y;
}

// ---------------------------------------------------------------------------
// Network weights

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Gate rows are stacked [input; forget; candidate; output], R rows each.
template <typename T>
struct LstmLayer {
  Mat<T> w;  // 4R x input
  Mat<T> u;  // 4R x R
  Vec<T> b;  // 4R
};

template <typename T>
struct NetworkWeights {
  std::vector<LstmLayer<T>> layers;
  Mat<T> dec_w;  // (M 2N) x R
  Vec<T> dec_b;  // M 2N

  int hidden() const { return layers.empty() ? 0 : static_cast<int>(layers.front().u.cols()); }
  int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }

  /// Visits every parameter block in file order: per layer (W, U, b), then decoder (W, b).
  template <typename F>
  void for_each_block(F&& f) {
    for (auto& l : layers) {
      f(l.w);
      f(l.u);
      f(l.b);
    }
    f(dec_w);
    f(dec_b);
  }
  template <typename F>
  void for_each_block(F&& f) const {
    for (const auto& l : layers) {
      f(l.w);
      f(l.u);
      f(l.b);
    }
    f(dec_w);
    f(dec_b);
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for_each_block([&](const auto& m) { c += static_cast<std::size_t>(m.size()); });
    return c;
  }

  NetworkWeights zeros_like() const {
    NetworkWeights z = *this;
    z.for_each_block([](auto& m) { m.setZero(); });
    return z;
  }

  template <typename U>
  NetworkWeights<U> cast() const {
    NetworkWeights<U> out;
    for (const auto& l : layers) out.layers.push_back({l.w.template cast<U>(), l.u.template cast<U>(), l.b.template cast<U>()});
    out.dec_w = dec_w.template cast<U>();
    out.dec_b = dec_b.template cast<U>();
    return out;
  }
};

struct PredictorMeta {
  int q = 4;  // observed pilots in
  int m = 8;  // virtual pilots out
  int n = 64;
  Domain domain = Domain::af;
  double train_snr_db = 30.0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
};

struct PredictorParams {
  NetworkWeights<double> net;
  PredictorMeta meta;

  int layer_count() const { return static_cast<int>(net.layers.size()); }
  int hidden() const { return net.hidden(); }

  void validate() const {
    if (net.layers.empty()) throw ShapeError("predictor: no LSTM layers");
    const int r = hidden();
    const int in = 2 * meta.n;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const auto& l = net.layers[i];
      const int expect_in = i == 0 ? in : r;
      if (l.w.rows() != 4 * r || l.w.cols() != expect_in || l.u.rows() != 4 * r || l.u.cols() != r ||
          l.b.size() != 4 * r)
        throw ShapeError("predictor: inconsistent LSTM layer shapes");
    }
    if (net.dec_w.rows() != meta.m * in || net.dec_w.cols() != r || net.dec_b.size() != meta.m * in)
      throw ShapeError("predictor: inconsistent decoder shape");
    if (meta.q < 1 || meta.m < 1) throw ShapeError("predictor: Q and M must be >= 1");
    bool finite = true;
    net.for_each_block([&](const auto& m) { finite = finite && m.allFinite(); });
    if (!finite) throw NumericalError("predictor: non-finite parameters");
  }
};

struct NetworkShape {
  int layers = 2;
  int hidden = 128;
};

/// Uniform(-1/sqrt(R), 1/sqrt(R)) everywhere, forget-gate bias +1. With
/// zero_decoder the decoder starts at zero, so the untrained model predicts 0.
inline PredictorParams init_params(const NetworkShape& shape, const PredictorMeta& meta, std::uint64_t seed,
                                   bool zero_decoder = false) {
  if (shape.layers < 1 || shape.hidden < 1) throw ConfigError("predictor: layers and hidden width must be >= 1");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> uni(-bound, bound);
  auto fill = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uni(rng);
  };
  const int r = shape.hidden;
  PredictorParams p;
  p.meta = meta;
  for (int i = 0; i < shape.layers; ++i) {
    LstmLayer<double> l{Mat<double>(4 * r, i == 0 ? 2 * meta.n : r), Mat<double>(4 * r, r), Vec<double>(4 * r)};
    fill(l.w);
    fill(l.u);
    fill(l.b);
    l.b.segment(r, r).array() += 1.0;
    p.net.layers.push_back(std::move(l));
  }
  p.net.dec_w = Mat<double>(meta.m * 2 * meta.n, r);
  p.net.dec_b = Vec<double>(meta.m * 2 * meta.n);
  if (zero_decoder) {
    p.net.dec_w.setZero();
    p.net.dec_b.setZero();
  } else {
    fill(p.net.dec_w);
    fill(p.net.dec_b);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Batched forward / backward pass. Columns are examples.

template <typename T>
class LstmEngine {
 public:
  struct LayerCache {
    std::vector<Mat<T>> x;                  // inputs, Q entries
    std::vector<Mat<T>> h, c;               // Q + 1 entries, index 0 is the zero state
    std::vector<Mat<T>> i, f, g, o, tanh_c;  // Q entries
  };
  struct Cache {
    std::vector<LayerCache> layers;
  };

  /// Runs the encoder, returns the last hidden state of the top layer (R x B).
  static Mat<T> encode(const NetworkWeights<T>& w, const std::vector<Mat<T>>& inputs, Cache* cache) {
    if (inputs.empty()) throw ShapeError("lstm_forward: empty input sequence");
    const Eigen::Index batch = inputs.front().cols();
    const int r = w.hidden();
    std::vector<Mat<T>> seq = inputs;
    if (cache) cache->layers.assign(w.layers.size(), {});
    for (std::size_t li = 0; li < w.layers.size(); ++li) {
      const auto& layer = w.layers[li];
      Mat<T> h = Mat<T>::Zero(r, batch);
      Mat<T> c = Mat<T>::Zero(r, batch);
      LayerCache* lc = cache ? &cache->layers[li] : nullptr;
      if (lc) {
        lc->x = seq;
        lc->h.push_back(h);
        lc->c.push_back(c);
      }
      for (std::size_t t = 0; t < seq.size(); ++t) {
        if (seq[t].rows() != layer.w.cols() || seq[t].cols() != batch)
          throw ShapeError("lstm_forward: input shape mismatch");
        Mat<T> z = layer.w * seq[t];
        z.noalias() += layer.u * h;
        z.colwise() += layer.b;
        Mat<T> ig = sigmoid(z.topRows(r));
        Mat<T> fg = sigmoid(z.middleRows(r, r));
        Mat<T> gg = z.middleRows(2 * r, r).array().tanh().matrix();
        Mat<T> og = sigmoid(z.bottomRows(r));
        c = (fg.array() * c.array() + ig.array() * gg.array()).matrix();
        Mat<T> tc = c.array().tanh().matrix();
        h = (og.array() * tc.array()).matrix();
        seq[t] = h;
        if (lc) {
          lc->h.push_back(h);
          lc->c.push_back(c);
          lc->i.push_back(std::move(ig));
          lc->f.push_back(std::move(fg));
          lc->g.push_back(std::move(gg));
          lc->o.push_back(std::move(og));
          lc->tanh_c.push_back(std::move(tc));
        }
      }
    }
    return seq.back();
  }

  static Mat<T> decode(const NetworkWeights<T>& w, const Mat<T>& h) {
    if (h.rows() != w.dec_w.cols()) throw ShapeError("decode: hidden size mismatch");
    Mat<T> out = w.dec_w * h;
    out.colwise() += w.dec_b;
    return out;
  }

  /// Backpropagation through time for loss gradient d_out (decoder output space).
  static void backward(const NetworkWeights<T>& w, const Cache& cache, const Mat<T>& top_h, const Mat<T>& d_out,
                       NetworkWeights<T>& grad) {
    grad.dec_w.noalias() += d_out * top_h.transpose();
    grad.dec_b += d_out.rowwise().sum();
    const Eigen::Index batch = d_out.cols();
    const int r = w.hidden();

    const std::size_t steps = cache.layers.front().x.size();
    std::vector<Mat<T>> dh_in(steps, Mat<T>::Zero(r, batch));
    dh_in.back() = w.dec_w.transpose() * d_out;

    for (std::size_t li = w.layers.size(); li-- > 0;) {
      const auto& layer = w.layers[li];
      const auto& lc = cache.layers[li];
      auto& lg = grad.layers[li];
      Mat<T> dh_next = Mat<T>::Zero(r, batch);
      Mat<T> dc_next = Mat<T>::Zero(r, batch);
      std::vector<Mat<T>> dx(steps);
      Mat<T> dz(4 * r, batch);
      for (std::size_t t = steps; t-- > 0;) {
        const auto i = lc.i[t].array(), f = lc.f[t].array(), g = lc.g[t].array(), o = lc.o[t].array();
        const auto tc = lc.tanh_c[t].array();
        const Mat<T> dh = dh_in[t] + dh_next;
        const auto dha = dh.array();
        Mat<T> dc = (dc_next.array() + dha * o * (T(1) - tc * tc)).matrix();
        const auto dca = dc.array();
        dz.topRows(r) = (dca * g * i * (T(1) - i)).matrix();
        dz.middleRows(r, r) = (dca * lc.c[t].array() * f * (T(1) - f)).matrix();
        dz.middleRows(2 * r, r) = (dca * i * (T(1) - g * g)).matrix();
        dz.bottomRows(r) = (dha * tc * o * (T(1) - o)).matrix();
        dc_next = (dca * f).matrix();

        lg.w.noalias() += dz * lc.x[t].transpose();
        lg.u.noalias() += dz * lc.h[t].transpose();
        lg.b += dz.rowwise().sum();
        dh_next = layer.u.transpose() * dz;
        if (li > 0) dx[t] = layer.w.transpose() * dz;
      }
      if (li > 0) dh_in = std::move(dx);
    }
  }

 private:
  template <typename D>
  static Mat<T> sigmoid(const Eigen::MatrixBase<D>& z) {
    return (T(1) / (T(1) + (-z.array()).exp())).matrix();
  }
};

/// Final-layer hidden state after Q inputs, zero initial states.
inline RVector lstm_forward(const PredictorParams& params, std::span<const RVector> inputs) {
  if (inputs.empty()) throw ShapeError("lstm_forward: Q must be >= 1");
  std::vector<Mat<double>> seq;
  for (const auto& a : inputs) {
    if (a.size() != params.net.input_size()) throw ShapeError("lstm_forward: input length mismatch");
    seq.emplace_back(a);
  }
  return LstmEngine<double>::encode(params.net, seq, nullptr).col(0);
}

/// W h + b split into M blocks of 2N.
inline std::vector<RVector> decode(const PredictorParams& params, const RVector& h) {
  if (h.size() != params.hidden()) throw ShapeError("decode: hidden length mismatch");
  const Mat<double> out = LstmEngine<double>::decode(params.net, h);
  const Eigen::Index block = 2 * params.meta.n;
  std::vector<RVector> blocks;
  for (int m = 0; m < params.meta.m; ++m) blocks.emplace_back(out.col(0).segment(m * block, block));
  return blocks;
}

/// Per-example complex scale: RMS of the observed pilots times the unit phase
/// of the strongest entry of the last observation. Predictions are linear in
/// this scale, so dividing it out removes an irrelevant degree of freedom.
inline Complex normalization_scale(std::span<const CVector> observed) {
  double energy = 0.0;
  Eigen::Index count = 0;
  for (const auto& y : observed) {
    energy += y.squaredNorm();
    count += y.size();
  }
  if (count == 0 || energy == 0.0) return {1.0, 0.0};
  const double rms = std::sqrt(energy / static_cast<double>(count));
  Eigen::Index peak = 0;
  observed.back().cwiseAbs2().maxCoeff(&peak);
  const Complex ref = observed.back()(peak);
  return std::abs(ref) > 0.0 ? rms * ref / std::abs(ref) : Complex(rms, 0.0);
}

/// Observed received pilots -> M virtual pilots.
inline std::vector<CVector> predict_virtual_pilots(const PredictorParams& params, std::span<const CVector> observed) {
  if (static_cast<int>(observed.size()) != params.meta.q)
    throw ShapeError("predict_virtual_pilots: observation count differs from the model's Q");
  const Complex scale = normalization_scale(observed);
  std::vector<RVector> inputs;
  for (const auto& y : observed) {
    if (y.size() != params.meta.n) throw ShapeError("predict_virtual_pilots: pilot length differs from N");
    inputs.push_back(reconcat(y / scale));
  }
  const RVector h = lstm_forward(params, inputs);
  std::vector<CVector> out;
  for (const auto& a : decode(params, h)) out.push_back(reconstruct(a) * scale);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingExample {
  std::vector<CVector> inputs;   // Q observed pilots
  std::vector<CVector> targets;  // M future pilots
};

struct TrainingSet {
  int q = 4;
  int m = 8;
  int n = 64;
  Domain domain = Domain::af;
  double snr_db = 30.0;
  std::uint64_t seed = 0;
  bool clean_targets = true;
  std::vector<TrainingExample> examples;
};

struct TrainConfig {
  NetworkShape shape;
  double learning_rate = 1e-3;
  int batch = 64;
  int epochs = 60;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

namespace detail {

/// Normalized real-valued tensors for a set of examples, one matrix per step.
template <typename T>
struct BatchTensors {
  std::vector<Mat<T>> inputs;  // Q x (2N x count)
  Mat<T> targets;              // (M 2N) x count
};

template <typename T>
BatchTensors<T> tensorize(const TrainingSet& data, std::span<const std::size_t> ids) {
  BatchTensors<T> bt;
  const auto count = static_cast<Eigen::Index>(ids.size());
  const int in = 2 * data.n;
  bt.inputs.assign(static_cast<std::size_t>(data.q), Mat<T>(in, count));
  bt.targets.resize(static_cast<Eigen::Index>(data.m) * in, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    const auto& ex = data.examples[ids[static_cast<std::size_t>(c)]];
    const Complex s = normalization_scale(ex.inputs);
    for (int t = 0; t < data.q; ++t) bt.inputs[static_cast<std::size_t>(t)].col(c) = reconcat(ex.inputs[t] / s).cast<T>();
    for (int m = 0; m < data.m; ++m)
      bt.targets.col(c).segment(static_cast<Eigen::Index>(m) * in, in) = reconcat(ex.targets[m] / s).cast<T>();
  }
  return bt;
}

/// Mean over examples of the summed squared error, and its gradient.
template <typename T>
double loss_and_gradient(const NetworkWeights<T>& w, const BatchTensors<T>& bt, NetworkWeights<T>* grad,
                         double loss_scale = 1.0) {
  typename LstmEngine<T>::Cache cache;
  const Mat<T> h = LstmEngine<T>::encode(w, bt.inputs, grad ? &cache : nullptr);
  const Mat<T> out = LstmEngine<T>::decode(w, h);
  const Mat<T> diff = out - bt.targets;
  const auto batch = static_cast<double>(diff.cols());
  const double loss = loss_scale * static_cast<double>(diff.squaredNorm()) / batch;
  if (grad) {
    const Mat<T> d_out = diff * static_cast<T>(2.0 * loss_scale / batch);
    LstmEngine<T>::backward(w, cache, h, d_out, *grad);
  }
  return loss;
}

}  // namespace detail

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch Adam with global-norm gradient clipping and full-length BPTT.
/// Example order per epoch is a seeded shuffle, so results are reproducible.
/// T selects the arithmetic precision of the training pass.
template <typename T = float>
PredictorParams train(const TrainConfig& cfg, const TrainingSet& data, const EpochCallback& on_epoch = {},
                      const PredictorParams* warm_start = nullptr) {
  if (data.examples.empty()) throw ConfigError("train: empty training set");
  if (cfg.batch < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) throw ConfigError("train: invalid optimizer settings");
  PredictorMeta meta{data.q, data.m, data.n, data.domain, data.snr_db, cfg.seed, {}};
  PredictorParams params = warm_start ? *warm_start : init_params(cfg.shape, meta, cfg.seed);
  if (warm_start) params.meta.loss_history = warm_start->meta.loss_history;
  params.validate();
  if (cfg.epochs == 0) return params;

  NetworkWeights<T> w = params.net.template cast<T>();
  NetworkWeights<T> m1 = w.zeros_like(), m2 = w.zeros_like(), grad = w.zeros_like();
  Rng rng(derive_seed(cfg.seed, 0x5eed));
  std::vector<std::size_t> order(data.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const auto bt = detail::tensorize<T>(data, std::span(order).subspan(start, stop - start));
      grad.for_each_block([](auto& g) { g.setZero(); });
      const double loss = detail::loss_and_gradient(w, bt, &grad);
      if (!std::isfinite(loss))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + " (diverged)");
      total += loss * static_cast<double>(stop - start);
      seen += stop - start;

      double sq = 0.0;
      grad.for_each_block([&](const auto& g) { sq += static_cast<double>(g.squaredNorm()); });
      const double gnorm = std::sqrt(sq);
      const T clip = gnorm > cfg.clip_norm ? static_cast<T>(cfg.clip_norm / gnorm) : T(1);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const T lr = static_cast<T>(cfg.learning_rate * std::sqrt(c2) / c1);
      const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
      const T eps = static_cast<T>(cfg.epsilon * std::sqrt(c2));
      // parameter blocks are visited in the same order in every structure
      std::vector<T*> wd, m1d, m2d;
      std::vector<const T*> gd;
      std::vector<Eigen::Index> sizes;
      w.for_each_block([&](auto& m) { wd.push_back(m.data()); sizes.push_back(m.size()); });
      m1.for_each_block([&](auto& m) { m1d.push_back(m.data()); });
      m2.for_each_block([&](auto& m) { m2d.push_back(m.data()); });
      grad.for_each_block([&](const auto& m) { gd.push_back(m.data()); });
      for (std::size_t blk = 0; blk < sizes.size(); ++blk) {
        Eigen::Map<Vec<T>> wv(wd[blk], sizes[blk]), mv(m1d[blk], sizes[blk]), vv(m2d[blk], sizes[blk]);
        Eigen::Map<const Vec<T>> gv(gd[blk], sizes[blk]);
        mv = b1 * mv + (T(1) - b1) * clip * gv;
        vv = b2 * vv + (T(1) - b2) * (clip * gv).cwiseAbs2();
        wv.array() -= lr * mv.array() / (vv.array().sqrt() + eps);
      }
    }
    const double epoch_loss = total / static_cast<double>(seen);
    params.meta.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  params.net = w.template cast<double>();
  params.validate();
  return params;
}

/// Loss of a model on a set of examples (same normalization and units as training).
inline double evaluate_loss(const PredictorParams& params, const TrainingSet& data) {
  std::vector<std::size_t> ids(data.examples.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto bt = detail::tensorize<double>(data, ids);
  return detail::loss_and_gradient<double>(params.net, bt, nullptr);
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  double max_abs_gradient = 0.0;
  std::size_t parameters = 0;
};

/// Analytic gradients of the per-example loss against central differences
/// (step 1e-5) for every parameter. Relative error is |a - n| / max(|a|, |n|, 1e-8).
inline GradientCheckResult gradient_check(const PredictorParams& params, const TrainingExample& example,
                                          double loss_scale = 1.0, double step = 1e-5) {
  TrainingSet one{params.meta.q, params.meta.m, params.meta.n, params.meta.domain, 0.0, 0, true, {example}};
  const std::size_t ids[] = {0};
  const auto bt = detail::tensorize<double>(one, ids);
  NetworkWeights<double> w = params.net;
  NetworkWeights<double> grad = w.zeros_like();
  detail::loss_and_gradient(w, bt, &grad, loss_scale);

  std::vector<double*> wd;
  std::vector<const double*> gd;
  std::vector<Eigen::Index> sizes;
  w.for_each_block([&](auto& m) { wd.push_back(m.data()); sizes.push_back(m.size()); });
  grad.for_each_block([&](const auto& m) { gd.push_back(m.data()); });

  GradientCheckResult res;
  for (std::size_t blk = 0; blk < sizes.size(); ++blk)
    for (Eigen::Index i = 0; i < sizes[blk]; ++i) {
      double& p = wd[blk][i];
      const double saved = p;
      p = saved + step;
      const double up = detail::loss_and_gradient<double>(w, bt, nullptr, loss_scale);
      p = saved - step;
      const double down = detail::loss_and_gradient<double>(w, bt, nullptr, loss_scale);
      p = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = gd[blk][i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      res.max_relative_error = std::max(res.max_relative_error, std::abs(analytic - numeric) / denom);
      res.max_abs_gradient = std::max(res.max_abs_gradient, std::abs(analytic));
      ++res.parameters;
    }
  return res;
}

/// Analytic gradient blocks flattened in file order (for tests).
inline std::vector<double> analytic_gradient(const PredictorParams& params, const TrainingExample& example,
                                             double loss_scale = 1.0) {
  TrainingSet one{params.meta.q, params.meta.m, params.meta.n, params.meta.domain, 0.0, 0, true, {example}};
  const std::size_t ids[] = {0};
  const auto bt = detail::tensorize<double>(one, ids);
  NetworkWeights<double> grad = params.net.zeros_like();
  detail::loss_and_gradient(params.net, bt, &grad, loss_scale);
  std::vector<double> flat;
  grad.for_each_block([&](const auto& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); });
  return flat;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Model file, all integers and floats little-endian:
//   "AFPM" | u32 version(=1) | u32 layers | u32 R | u32 Q | u32 M | u32 N
//   | u64 seed | f64 training SNR (dB) | u32 domain (0 TF, 1 AF)
//   | u32 E | E x f64 epoch losses
//   | parameters as f64: per layer W (4R x in), U (4R x R), b (4R); decoder W (2NM x R), b (2NM)
// Matrices are written row-major.

inline constexpr std::uint32_t kModelVersion = 1;

namespace io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ShapeError("unexpected end of file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ShapeError("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace io

inline void save_model(std::ostream& os, const PredictorParams& p) {
  p.validate();
  os.write("AFPM", 4);
  io::put_u32(os, kModelVersion);
  io::put_u32(os, static_cast<std::uint32_t>(p.layer_count()));
  io::put_u32(os, static_cast<std::uint32_t>(p.hidden()));
  io::put_u32(os, static_cast<std::uint32_t>(p.meta.q));
  io::put_u32(os, static_cast<std::uint32_t>(p.meta.m));
  io::put_u32(os, static_cast<std::uint32_t>(p.meta.n));
  io::put_u64(os, p.meta.seed);
  io::put_f64(os, p.meta.train_snr_db);
  io::put_u32(os, p.meta.domain == Domain::af ? 1u : 0u);
  io::put_u32(os, static_cast<std::uint32_t>(p.meta.loss_history.size()));
  for (double l : p.meta.loss_history) io::put_f64(os, l);
  p.net.for_each_block([&](const auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) io::put_f64(os, m(r, c));
  });
  if (!os) throw std::runtime_error("save_model: write failed");
}

inline PredictorParams load_model(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AFPM", 4) != 0) throw ShapeError("load_model: not a model file");
  const auto version = io::get_u32(is);
  if (version != kModelVersion) throw ShapeError("load_model: unsupported format version " + std::to_string(version));
  const auto layers = static_cast<int>(io::get_u32(is));
  const auto hidden = static_cast<int>(io::get_u32(is));
  PredictorMeta meta;
  meta.q = static_cast<int>(io::get_u32(is));
  meta.m = static_cast<int>(io::get_u32(is));
  meta.n = static_cast<int>(io::get_u32(is));
  meta.seed = io::get_u64(is);
  meta.train_snr_db = io::get_f64(is);
  meta.domain = io::get_u32(is) == 1u ? Domain::af : Domain::tf;
  const auto epochs = io::get_u32(is);
  if (layers < 1 || layers > 64 || hidden < 1 || hidden > 1 << 16 || meta.n < 1 || meta.n > 1 << 16 || meta.q < 1 ||
      meta.m < 1 || meta.q > 1 << 12 || meta.m > 1 << 12 || epochs > 1u << 24)
    throw ShapeError("load_model: implausible header");
  for (std::uint32_t e = 0; e < epochs; ++e) meta.loss_history.push_back(io::get_f64(is));
  PredictorParams p = init_params({layers, hidden}, meta, 0, true);
  p.meta = meta;
  p.net.for_each_block([&](auto& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = io::get_f64(is);
  });
  if (is.peek() != std::char_traits<char>::eof()) throw ShapeError("load_model: trailing bytes after parameters");
  p.validate();
  return p;
}

inline void save_model(const std::string& path, const PredictorParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  save_model(os, p);
}

inline PredictorParams load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ShapeError("load_model: cannot open " + path);
  return load_model(is);
}

// Dataset file, little-endian:
//   "AFPD" | u32 version(=1) | u32 Q | u32 M | u32 N | u32 count | u32 domain
//   | u32 clean_targets | f64 SNR | u64 seed
//   | per example: Q inputs then M targets, each N x (f32 re, f32 im)
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(std::ostream& os, const TrainingSet& d) {
  os.write("AFPD", 4);
  io::put_u32(os, kDatasetVersion);
  io::put_u32(os, static_cast<std::uint32_t>(d.q));
  io::put_u32(os, static_cast<std::uint32_t>(d.m));
  io::put_u32(os, static_cast<std::uint32_t>(d.n));
  io::put_u32(os, static_cast<std::uint32_t>(d.examples.size()));
  io::put_u32(os, d.domain == Domain::af ? 1u : 0u);
  io::put_u32(os, d.clean_targets ? 1u : 0u);
  io::put_f64(os, d.snr_db);
  io::put_u64(os, d.seed);
  auto put_vec = [&](const CVector& v) {
    if (v.size() != d.n) throw ShapeError("save_dataset: vector length differs from N");
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      io::put_f32(os, static_cast<float>(v(i).real()));
      io::put_f32(os, static_cast<float>(v(i).imag()));
    }
  };
  for (const auto& ex : d.examples) {
    if (static_cast<int>(ex.inputs.size()) != d.q || static_cast<int>(ex.targets.size()) != d.m)
      throw ShapeError("save_dataset: example shape differs from (Q, M)");
    for (const auto& v : ex.inputs) put_vec(v);
    for (const auto& v : ex.targets) put_vec(v);
  }
  if (!os) throw std::runtime_error("save_dataset: write failed");
}

inline TrainingSet load_dataset(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AFPD", 4) != 0) throw ShapeError("load_dataset: not a dataset file");
  if (io::get_u32(is) != kDatasetVersion) throw ShapeError("load_dataset: unsupported format version");
  TrainingSet d;
  d.q = static_cast<int>(io::get_u32(is));
  d.m = static_cast<int>(io::get_u32(is));
  d.n = static_cast<int>(io::get_u32(is));
  const auto count = io::get_u32(is);
  d.domain = io::get_u32(is) == 1u ? Domain::af : Domain::tf;
  d.clean_targets = io::get_u32(is) == 1u;
  d.snr_db = io::get_f64(is);
  d.seed = io::get_u64(is);
  auto get_vec = [&] {
    CVector v(d.n);
    for (int i = 0; i < d.n; ++i) {
      const float re = io::get_f32(is);
      const float im = io::get_f32(is);
      v(i) = Complex(re, im);
    }
    return v;
  };
  d.examples.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    TrainingExample ex;
    for (int q = 0; q < d.q; ++q) ex.inputs.push_back(get_vec());
    for (int m = 0; m < d.m; ++m) ex.targets.push_back(get_vec());
    d.examples.push_back(std::move(ex));
  }
  return d;
}

}  // namespace afpilot
