// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/optimizer.hpp"

#include <cmath>

#include "splatseg/error.hpp"

namespace splatseg {

void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments &state, double lr,
                 const AdamHyper &hyper) {
  require(params.size() == grads.size() && state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorKind::Contract, "adam_update: parameter, gradient and moment sizes differ");
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const double step_size = lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * g;
    state.v[k] = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * g * g;
    params[k] -= step_size * state.m[k] / (std::sqrt(state.v[k]) / sqrt_bc2 + hyper.eps);
  }
}

GaussianOptimizer::GaussianOptimizer(const GaussianCloud &cloud, AdamHyper hyper) : hyper_(hyper) {
  for (ParamGroup g : kParamGroups) group(g) = AdamMoments(cloud.group(g).size());
}

void GaussianOptimizer::step(GaussianCloud &cloud, const ParamGradients &grads,
                             const std::array<double, 6> &learning_rates) {
  require(grads.size() == cloud.size(), ErrorKind::Contract, "optimizer step: gradient count differs from cloud");
  for (ParamGroup g : kParamGroups) {
    auto &params = cloud.group(g);
    if (params.empty()) continue;
    adam_update(params, grads.group(g), group(g), learning_rates[static_cast<std::size_t>(g)], hyper_);
  }
  cloud.normalize_rotations();
}

void GaussianOptimizer::remap(const GaussianCloud &cloud, std::span<const std::size_t> ancestors,
                              std::span<const std::uint8_t> fresh) {
  require(ancestors.size() == cloud.size() && fresh.size() == cloud.size(), ErrorKind::Contract,
          "optimizer remap: mapping does not cover the cloud");
  for (ParamGroup g : kParamGroups) {
    const std::size_t stride = static_cast<std::size_t>(cloud.stride(g));
    AdamMoments &old = group(g);
    AdamMoments next(cloud.size() * stride);
    next.step = old.step;
    for (std::size_t i = 0; i < ancestors.size(); ++i) {
      if (fresh[i]) continue;
      const std::size_t a = ancestors[i];
      require((a + 1) * stride <= old.m.size(), ErrorKind::Contract, "optimizer remap: ancestor out of range");
      for (std::size_t k = 0; k < stride; ++k) {
        next.m[i * stride + k] = old.m[a * stride + k];
        next.v[i * stride + k] = old.v[a * stride + k];
      }
    }
    old = std::move(next);
  }
}

} // namespace splatseg
