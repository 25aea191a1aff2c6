#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdt/train.hpp"

namespace sdt {

struct GradCheckEntry {
  std::string name;  // e.g. "feature1.kernel"
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool passed(double tol) const { return max_rel_err < tol; }
};

// A deliberately small architecture so exhaustive finite differencing stays
// fast while every kind of parameter tensor is present.
inline ModelConfig tiny_gradcheck_config() {
  ModelConfig cfg;
  cfg.scale = 2;
  cfg.feature_filters = {4, 3};
  cfg.recon_a1 = 8;
  cfg.recon_b1 = 4;
  cfg.recon_b2 = 4;
  cfg.dropout_keep = 1.0;  // masks degenerate to all-ones
  return cfg;
}

// Central-difference validation of backward() in double precision. Every
// parameter of every tensor is perturbed by +-eps; the relative error of
// analytic vs numeric gradient is |a - f| / max(|a| + |f|, 1e-8).
//
// PReLU slopes are moved off their zero init to 0.25 first so the
// negative-side derivative paths carry signal.
inline GradCheckReport gradient_check(const ModelConfig& cfg, double eps,
                                      std::uint64_t seed) {
  cfg.validate();
  ModelWeights<double> w = init_model<double>(cfg, derive_seed(seed, 1));
  w.for_each_layer([](const std::string&, ConvLayer<double>& l) {
    if (l.prelu.size()) l.prelu.setConstant(0.25);
  });

  const int h = 6, wdt = 6;
  Rng rng(derive_seed(seed, 2));
  Tensor<double> x = make_tensor<double>(h, wdt, 1);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data[i] = rng.uniform();
  Tensor<double> target = make_tensor<double>(h * cfg.scale, wdt * cfg.scale, 1);
  for (Eigen::Index i = 0; i < target.data.size(); ++i)
    target.data[i] = rng.uniform();

  const std::uint64_t mask_seed = derive_seed(seed, 3);
  const auto loss_at = [&](const ModelWeights<double>& weights) {
    Tensor<double> pred = forward(weights, cfg, x, true, mask_seed);
    return mse_loss(pred, target).first;
  };

  ForwardCache<double> cache;
  Tensor<double> pred = forward(w, cfg, x, true, mask_seed, &cache);
  auto [loss0, dy] = mse_loss(pred, target);
  (void)loss0;
  const ModelWeights<double> analytic = backward(w, cache, dy);

  GradCheckReport report;
  const auto check_array = [&](const std::string& name,
                               Eigen::Array<double, Eigen::Dynamic, 1>& params,
                               const Eigen::Array<double, Eigen::Dynamic, 1>&
                                   grad) {
    GradCheckEntry entry{name, 0.0};
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + eps;
      const double lp = loss_at(w);
      params[i] = orig - eps;
      const double lm = loss_at(w);
      params[i] = orig;
      const double fd = (lp - lm) / (2.0 * eps);
      const double a = grad[i];
      const double rel =
          std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-8);
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.entries.push_back(entry);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
  };

  // Walk weight and gradient trees in lockstep (identical layer order).
  std::vector<std::pair<std::string, ConvLayer<double>*>> wl;
  std::vector<const ConvLayer<double>*> gl;
  w.for_each_layer([&](const std::string& n, ConvLayer<double>& l) {
    wl.emplace_back(n, &l);
  });
  analytic.for_each_layer(
      [&](const std::string&, const ConvLayer<double>& l) {
        gl.push_back(&l);
      });
  for (size_t i = 0; i < wl.size(); ++i) {
    check_array(wl[i].first + ".kernel", wl[i].second->kernel, gl[i]->kernel);
    check_array(wl[i].first + ".bias", wl[i].second->bias, gl[i]->bias);
    if (wl[i].second->prelu.size())
      check_array(wl[i].first + ".prelu", wl[i].second->prelu, gl[i]->prelu);
  }
  return report;
}

}  // namespace sdt
