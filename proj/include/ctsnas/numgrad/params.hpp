#ifndef CTSNAS_NUMGRAD_PARAMS_HPP
#define CTSNAS_NUMGRAD_PARAMS_HPP

#include "ctsnas/common/rng.hpp"
#include "ctsnas/numgrad/tensor.hpp"

#include <cmath>
#include <map>
#include <string>

namespace ctsnas::numgrad {

// Named parameter tensors with deterministic iteration order.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor t) {
    t.requires_grad = true;
    auto [it, fresh] = map_.emplace(name, std::move(t));
    if (!fresh) throw StateError("parameter already exists: " + name);
    return it->second;
  }

  Tensor& create_glorot(const std::string& name, Shape shape, Rng& rng) {
    long fan_in = 1, fan_out = 1;
    if (shape.size() >= 2) {
      fan_out = shape.back();
      fan_in = shape_numel(shape) / fan_out;
    } else if (!shape.empty()) {
      fan_in = fan_out = shape.front();
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-a, a);
    return create(name, std::move(t));
  }

  Tensor& create_zeros(const std::string& name, Shape shape) {
    return create(name, Tensor(std::move(shape)));
  }

  bool has(const std::string& name) const { return map_.count(name) > 0; }
  Tensor& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw StateError("no parameter named " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw StateError("no parameter named " + name);
    return it->second;
  }

  std::size_t size() const { return map_.size(); }
  long total_numel() const {
    long n = 0;
    for (const auto& [k, v] : map_) n += v.numel();
    return n;
  }

  auto begin() { return map_.begin(); }
  auto end() { return map_.end(); }
  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

 private:
  std::map<std::string, Tensor> map_;
};

// FNV-1a over the raw float64 bytes in name order; used to verify that
// eval paths leave weights untouched.
std::uint64_t content_hash(const ParamStore& params);

}  // namespace ctsnas::numgrad

#endif
