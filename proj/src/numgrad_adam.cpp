#include "ctsnas/numgrad/adam.hpp"

#include <cmath>

namespace ctsnas::numgrad {

std::uint64_t content_hash(const ParamStore& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : params) {
    feed(name.data(), name.size());
    feed(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  return h;
}

void Adam::step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (!g.same_shape(p))
      throw ShapeError("adam: gradient shape " + shape_str(g.shape()) + " for parameter " + name +
                       " of shape " + shape_str(p.shape()));
    if (!g.all_finite()) throw StateError("adam: non-finite gradient for parameter " + name);
    auto [it, fresh] = states_.try_emplace(name);
    State& s = it->second;
    if (fresh) {
      s.m = Tensor::zeros_like(p);
      s.v = Tensor::zeros_like(p);
    }
    if (cfg_.weight_decay != 0.0) p.flat() *= (1.0 - cfg_.lr * cfg_.weight_decay);
    s.m.flat() = cfg_.beta1 * s.m.flat() + (1.0 - cfg_.beta1) * g.flat();
    s.v.flat() = cfg_.beta2 * s.v.flat() + (1.0 - cfg_.beta2) * g.flat().square();
    p.flat() -= cfg_.lr * (s.m.flat() / bc1) / ((s.v.flat() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace ctsnas::numgrad
