#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "sdt/errors.hpp"
#include "sdt/model.hpp"
#include "sdt/patch.hpp"

namespace sdt {

enum class TrainMode { ST, SDT };

inline const char* to_string(TrainMode m) {
  return m == TrainMode::ST ? "st" : "sdt";
}

struct TrainConfig {
  TrainMode mode = TrainMode::SDT;
  int steps = 0;
  int batch = 20;
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout_keep = 0.8;
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("TrainConfig: steps < 1");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch < 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate <= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("TrainConfig: betas must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon <= 0");
    if (!(dropout_keep > 0.0) || dropout_keep > 1.0)
      throw std::invalid_argument("TrainConfig: dropout_keep not in (0, 1]");
    if (threads < 1) throw std::invalid_argument("TrainConfig: threads < 1");
  }
};

// Mean squared error over all samples, plus its gradient d(loss)/d(pred).
// The sum runs in double regardless of Scalar.
template <typename Scalar>
std::pair<double, Tensor<Scalar>> mse_loss(const Tensor<Scalar>& pred,
                                           const Tensor<Scalar>& target) {
  if (pred.height != target.height || pred.width != target.width ||
      pred.channels != target.channels)
    throw std::invalid_argument("mse_loss: shape mismatch");
  const Eigen::Index n = pred.data.size();
  const double loss =
      (pred.data.template cast<double>() - target.data.template cast<double>())
          .square()
          .sum() /
      static_cast<double>(n);
  Tensor<Scalar> grad = make_tensor<Scalar>(pred.height, pred.width,
                                            pred.channels);
  grad.data = Scalar(2) * (pred.data - target.data) / static_cast<Scalar>(n);
  return {loss, std::move(grad)};
}

// Reverse-mode gradients of the whole network given the cache of a
// training-mode forward pass and the loss gradient at the output.
template <typename Scalar>
ModelWeights<Scalar> backward(const ModelWeights<Scalar>& w,
                              const ForwardCache<Scalar>& cache,
                              const Tensor<Scalar>& dy) {
  if (!cache.valid)
    throw InvalidStateError(
        "backward: cache was not produced by a training-mode forward pass");
  const ModelConfig& cfg = cache.config;
  const int s = cfg.scale;
  if (dy.channels != 1 || dy.height != cache.input.height * s ||
      dy.width != cache.input.width * s)
    throw InvalidStateError("backward: output gradient shape mismatch");
  if (w.feature.size() != cache.feat_z.size())
    throw InvalidStateError("backward: cache does not match these weights");

  ModelWeights<Scalar> g = zero_model<Scalar>(cfg);

  // Residual add has unit gradient; the bicubic branch holds no parameters.
  // Undo the sub-pixel shuffle, then the final 1x1 conv.
  Tensor<Scalar> dzl = space_to_depth(dy, s);
  {
    ConvGrads<Scalar> cg = conv2d_backward(cache.recon_in, w.recon_l, dzl);
    g.recon_l.kernel = std::move(cg.kernel);
    g.recon_l.bias = std::move(cg.bias);
    dzl = std::move(cg.dx);  // now the gradient at recon_in
  }

  // Split the reconstruction concat back into the A and B branches.
  const Eigen::Index a_size =
      cache.input.plane_size() * w.recon_a1.out_channels;
  const Eigen::Index b_size =
      cache.input.plane_size() * w.recon_b2.out_channels;
  Tensor<Scalar> da_o = make_tensor<Scalar>(cache.input.height,
                                            cache.input.width,
                                            w.recon_a1.out_channels);
  Tensor<Scalar> db_o = make_tensor<Scalar>(cache.input.height,
                                            cache.input.width,
                                            w.recon_b2.out_channels);
  da_o.data = dzl.data.head(a_size);
  db_o.data = dzl.data.tail(b_size);

  // One activator+dropout+conv step backward.
  const auto branch_backward =
      [&](const Tensor<Scalar>& x, const ConvLayer<Scalar>& layer,
          const Tensor<Scalar>& z, const Tensor<Scalar>& a,
          const typename Tensor<Scalar>::Array& mask, Tensor<Scalar>& dout,
          ConvLayer<Scalar>& dst) -> Tensor<Scalar> {
    Tensor<Scalar> da = make_tensor<Scalar>(dout.height, dout.width,
                                            dout.channels);
    da.data = mask.size() ? (dout.data * mask).eval() : dout.data;
    ActGrads<Scalar> ag = activate_backward(z, a, cfg.activator, layer.prelu,
                                            da);
    if (ag.dslope.size()) dst.prelu = std::move(ag.dslope);
    ConvGrads<Scalar> cg = conv2d_backward(x, layer, ag.dz);
    dst.kernel = std::move(cg.kernel);
    dst.bias = std::move(cg.bias);
    return std::move(cg.dx);
  };

  Tensor<Scalar> dcat_a = branch_backward(cache.concat, w.recon_a1,
                                          cache.a1_z, cache.a1_a,
                                          cache.a1_mask, da_o, g.recon_a1);
  Tensor<Scalar> db1_o = branch_backward(cache.b1_o, w.recon_b2, cache.b2_z,
                                         cache.b2_a, cache.b2_mask, db_o,
                                         g.recon_b2);
  Tensor<Scalar> dcat_b = branch_backward(cache.concat, w.recon_b1,
                                          cache.b1_z, cache.b1_a,
                                          cache.b1_mask, db1_o, g.recon_b1);
  dcat_a.data += dcat_b.data;

  // Walk the feature cascade backward. Each cascade output feeds both the
  // skip concatenation and (except the last) the next conv, so gradients
  // from the two consumers accumulate.
  const size_t layers = w.feature.size();
  std::vector<Eigen::Index> offsets(layers);
  {
    Eigen::Index off = 0;
    for (size_t l = 0; l < layers; ++l) {
      offsets[l] = off;
      off += cache.feat_o[l].data.size();
    }
  }
  Tensor<Scalar> dnext;  // gradient flowing into o_l from conv l+1
  for (size_t l = layers; l-- > 0;) {
    Tensor<Scalar> do_l = make_tensor<Scalar>(
        cache.feat_o[l].height, cache.feat_o[l].width,
        cache.feat_o[l].channels);
    do_l.data = dcat_a.data.segment(offsets[l], do_l.data.size());
    if (dnext.data.size()) do_l.data += dnext.data;
    const Tensor<Scalar>& x = l == 0 ? cache.input : cache.feat_o[l - 1];
    dnext = branch_backward(x, w.feature[l], cache.feat_z[l], cache.feat_a[l],
                            cache.feat_mask[l], do_l, g.feature[l]);
  }
  return g;
}

template <typename Scalar>
struct OptimizerState {
  ModelWeights<Scalar> m;
  ModelWeights<Scalar> v;
  long step = 0;
};

template <typename Scalar>
OptimizerState<Scalar> make_optimizer_state(const ModelConfig& cfg) {
  return {zero_model<Scalar>(cfg), zero_model<Scalar>(cfg), 0};
}

// One Adam update of a single parameter array (first/second moment estimates
// with bias correction; epsilon sits outside the square root).
template <typename Scalar>
void adam_update(typename ConvLayer<Scalar>::Array& w,
                 const typename ConvLayer<Scalar>::Array& grad,
                 typename ConvLayer<Scalar>::Array& m,
                 typename ConvLayer<Scalar>::Array& v, long step,
                 const TrainConfig& cfg) {
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.square();
  const Scalar mc = static_cast<Scalar>(
      1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(step))));
  const Scalar vc = static_cast<Scalar>(
      1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(step))));
  w -= static_cast<Scalar>(cfg.learning_rate) * (m * mc) /
       ((v * vc).sqrt() + static_cast<Scalar>(cfg.epsilon));
}

namespace detail {
template <typename Scalar, typename F>
void zip_layers(ModelWeights<Scalar>& a, const ModelWeights<Scalar>& b,
                ModelWeights<Scalar>& c, ModelWeights<Scalar>& d, F&& f) {
  for (size_t i = 0; i < a.feature.size(); ++i)
    f(a.feature[i], b.feature[i], c.feature[i], d.feature[i]);
  f(a.recon_a1, b.recon_a1, c.recon_a1, d.recon_a1);
  f(a.recon_b1, b.recon_b1, c.recon_b1, d.recon_b1);
  f(a.recon_b2, b.recon_b2, c.recon_b2, d.recon_b2);
  f(a.recon_l, b.recon_l, c.recon_l, d.recon_l);
}
}  // namespace detail

// Applies one Adam step to every parameter array of the model.
template <typename Scalar>
void adam_step(ModelWeights<Scalar>& w, const ModelWeights<Scalar>& grads,
               OptimizerState<Scalar>& state, const TrainConfig& cfg) {
  ++state.step;
  detail::zip_layers<Scalar>(
      w, grads, state.m, state.v,
      [&](ConvLayer<Scalar>& lw, const ConvLayer<Scalar>& lg,
          ConvLayer<Scalar>& lm, ConvLayer<Scalar>& lv) {
        adam_update<Scalar>(lw.kernel, lg.kernel, lm.kernel, lv.kernel,
                            state.step, cfg);
        adam_update<Scalar>(lw.bias, lg.bias, lm.bias, lv.bias, state.step,
                            cfg);
        if (lw.prelu.size())
          adam_update<Scalar>(lw.prelu, lg.prelu, lm.prelu, lv.prelu,
                              state.step, cfg);
      });
}

namespace detail {
template <typename Scalar>
void accumulate(ModelWeights<Scalar>& acc, const ModelWeights<Scalar>& g) {
  for (size_t i = 0; i < acc.feature.size(); ++i) {
    acc.feature[i].kernel += g.feature[i].kernel;
    acc.feature[i].bias += g.feature[i].bias;
    if (acc.feature[i].prelu.size())
      acc.feature[i].prelu += g.feature[i].prelu;
  }
  const auto add = [](ConvLayer<Scalar>& a, const ConvLayer<Scalar>& b) {
    a.kernel += b.kernel;
    a.bias += b.bias;
    if (a.prelu.size()) a.prelu += b.prelu;
  };
  add(acc.recon_a1, g.recon_a1);
  add(acc.recon_b1, g.recon_b1);
  add(acc.recon_b2, g.recon_b2);
  add(acc.recon_l, g.recon_l);
}

template <typename Scalar>
void scale_weights(ModelWeights<Scalar>& w, Scalar f) {
  w.for_each_layer([&](const std::string&, ConvLayer<Scalar>& l) {
    l.kernel *= f;
    l.bias *= f;
    if (l.prelu.size()) l.prelu *= f;
  });
}
}  // namespace detail

// Mean gradient and mean loss over a batch of patch pairs. Samples are
// distributed over `threads` contiguous blocks; per-thread partial sums are
// reduced in thread order and per-sample losses in sample order, so results
// are bit-reproducible for a fixed thread count (and the loss for any).
template <typename Scalar>
std::pair<ModelWeights<Scalar>, double> compute_batch_gradient(
    const ModelWeights<Scalar>& w, const ModelConfig& cfg,
    const std::vector<const PatchPair<Scalar>*>& batch,
    const std::vector<std::uint64_t>& dropout_seeds, int threads) {
  if (batch.empty())
    throw std::invalid_argument("compute_batch_gradient: empty batch");
  if (dropout_seeds.size() != batch.size())
    throw std::invalid_argument("compute_batch_gradient: seed count mismatch");

  const int n = static_cast<int>(batch.size());
  const int t_count = std::max(1, std::min(threads, n));
  std::vector<ModelWeights<Scalar>> partial(
      static_cast<size_t>(t_count));
  std::vector<double> losses(static_cast<size_t>(n), 0.0);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(t_count));

  const auto work = [&](int t) {
    try {
      ModelWeights<Scalar> acc = zero_model<Scalar>(cfg);
      const int lo = t * n / t_count;
      const int hi = (t + 1) * n / t_count;
      for (int i = lo; i < hi; ++i) {
        const PatchPair<Scalar>& p = *batch[static_cast<size_t>(i)];
        Tensor<Scalar> x = tensor_from_luma(p.lr);
        Tensor<Scalar> y = tensor_from_luma(p.hr);
        ForwardCache<Scalar> cache;
        Tensor<Scalar> pred = forward(w, cfg, x, true,
                                      dropout_seeds[static_cast<size_t>(i)],
                                      &cache);
        auto [loss, dy] = mse_loss(pred, y);
        losses[static_cast<size_t>(i)] = loss;
        detail::accumulate(acc, backward(w, cache, dy));
      }
      partial[static_cast<size_t>(t)] = std::move(acc);
    } catch (...) {
      errors[static_cast<size_t>(t)] = std::current_exception();
    }
  };

  if (t_count == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(t_count));
    for (int t = 0; t < t_count; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ModelWeights<Scalar> total = std::move(partial[0]);
  for (int t = 1; t < t_count; ++t)
    detail::accumulate(total, partial[static_cast<size_t>(t)]);
  detail::scale_weights(total, Scalar(1) / static_cast<Scalar>(n));

  double loss_sum = 0.0;
  for (double l : losses) loss_sum += l;
  return {std::move(total), loss_sum / n};
}

template <typename Scalar>
struct TrainResult {
  ModelWeights<Scalar> weights;
  std::vector<double> loss_log;  // mean batch loss per executed step
};

// Progress hook: called after every step with (1-based step, loss); return
// false to stop early.
using TrainCallback = std::function<bool(int, double)>;

// Trains a fresh He-initialised model with Adam on MSE. Batches are drawn as
// epoch shuffles without replacement; if batch >= pairs.size() every step is
// one full-batch pass in index order.
template <typename Scalar>
TrainResult<Scalar> train(const std::vector<PatchPair<Scalar>>& pairs,
                          const ModelConfig& mcfg_in, const TrainConfig& tcfg,
                          const TrainCallback& progress = nullptr) {
  tcfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train: no patch pairs");

  ModelConfig mcfg = mcfg_in;
  mcfg.dropout_keep = tcfg.dropout_keep;
  mcfg.validate();

  const int lr_h = pairs.front().lr.height;
  const int lr_w = pairs.front().lr.width;
  for (const auto& p : pairs) {
    if (p.lr.height != lr_h || p.lr.width != lr_w)
      throw std::invalid_argument("train: patch sizes differ across pairs");
    if (p.hr.height != lr_h * mcfg.scale || p.hr.width != lr_w * mcfg.scale)
      throw std::invalid_argument(
          "train: HR patch does not match LR patch * scale");
  }

  TrainResult<Scalar> result;
  result.weights = init_model<Scalar>(mcfg, derive_seed(tcfg.seed, 0x1417));
  OptimizerState<Scalar> state = make_optimizer_state<Scalar>(mcfg);
  result.loss_log.reserve(static_cast<size_t>(tcfg.steps));

  const int n = static_cast<int>(pairs.size());
  const int batch = std::min(tcfg.batch, n);
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng shuffle_rng(derive_seed(tcfg.seed, 0x2b5e));
  int pos = n;  // triggers a shuffle before the first mini-batch epoch

  std::vector<const PatchPair<Scalar>*> batch_ptrs(
      static_cast<size_t>(batch));
  std::vector<std::uint64_t> seeds(static_cast<size_t>(batch));

  for (int step = 1; step <= tcfg.steps; ++step) {
    if (batch == n) {
      for (int i = 0; i < batch; ++i)
        batch_ptrs[static_cast<size_t>(i)] = &pairs[static_cast<size_t>(i)];
    } else {
      for (int i = 0; i < batch; ++i) {
        if (pos == n) {  // epoch exhausted: reshuffle (Fisher-Yates)
          for (int k = n - 1; k > 0; --k)
            std::swap(order[static_cast<size_t>(k)],
                      order[static_cast<size_t>(shuffle_rng.bounded(
                          static_cast<std::uint64_t>(k) + 1))]);
          pos = 0;
        }
        batch_ptrs[static_cast<size_t>(i)] =
            &pairs[static_cast<size_t>(order[static_cast<size_t>(pos++)])];
      }
    }
    for (int i = 0; i < batch; ++i)
      seeds[static_cast<size_t>(i)] = derive_seed(
          tcfg.seed, 0xd0000000ULL + static_cast<std::uint64_t>(step),
          static_cast<std::uint64_t>(i));

    auto [grads, loss] = compute_batch_gradient(result.weights, mcfg,
                                                batch_ptrs, seeds,
                                                tcfg.threads);
    adam_step(result.weights, grads, state, tcfg);
    result.loss_log.push_back(loss);
    if (progress && !progress(step, loss)) break;
  }
  return result;
}

}  // namespace sdt
