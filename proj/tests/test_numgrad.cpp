#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctsnas/common/rng.hpp"
#include "ctsnas/numgrad/adam.hpp"
#include "ctsnas/numgrad/blob.hpp"
#include "ctsnas/numgrad/gradcheck.hpp"
#include "ctsnas/numgrad/graph.hpp"

#include <cmath>
#include <filesystem>

using namespace ctsnas;
using namespace ctsnas::numgrad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("matmul identity case") {
  // 2x3 times 3x2, both identity-padded
  Tensor a({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor b({3, 2}, {1, 0, 0, 1, 0, 0});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.at({0, 0}) == 1.0);
  CHECK(c.at({0, 1}) == 0.0);
  CHECK(c.at({1, 0}) == 0.0);
  CHECK(c.at({1, 1}) == 1.0);
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor x({3}, {0, 0, 0});
  Tensor y = softmax(x, 0);
  for (long i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("relu(Wx+b) with identity weights") {
  Graph g;
  auto W = g.value(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = g.value(Tensor({2}, {0, 0}));
  auto x = g.value(Tensor({1, 2}, {-1, 2}));
  auto y = g.relu(g.add(g.matmul(x, W), b));
  CHECK(g.tensor(y).at({0, 0}) == 0.0);
  CHECK(g.tensor(y).at({0, 1}) == 2.0);
}

TEST_CASE("backward of x squared at 3") {
  Graph g;
  auto x = g.param("x", Tensor::scalar(3.0));
  auto y = g.mul(x, x);
  g.backward(y);
  CHECK(g.grad(x).value() == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward of constant function is zero") {
  Graph g;
  auto x = g.param("x", Tensor::scalar(3.0));
  auto c = g.value(Tensor::scalar(7.0));
  auto y = g.add(g.scale(x, 0.0), c);
  g.backward(y);
  CHECK(g.grad(x).value() == 0.0);
}

TEST_CASE("forward is pure: repeated evaluation is bit-identical") {
  Rng rng(7);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor w = random_tensor({5, 3}, rng);
  Tensor y1 = matmul(x, w);
  Tensor y2 = matmul(x, w);
  for (long i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y2[i]);

  Graph g;
  auto xi = g.value(x);
  auto wi = g.value(w);
  auto yi = g.softmax(g.matmul(xi, wi), 1);
  Tensor a = g.tensor(yi);
  g.set_value(xi, x);
  g.forward();
  Tensor b = g.tensor(yi);
  for (long i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("shape errors name the primitive and shapes") {
  Tensor a({2, 3});
  Tensor b({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
  Graph g;
  auto ai = g.value(a);
  CHECK_THROWS_AS(g.softmax(ai, 5), ShapeError);
}

TEST_CASE("backward before forward raises a state error") {
  Graph g;
  auto x = g.param("x", Tensor::scalar(2.0));
  auto y = g.mul(x, x);
  g.set_value(x, Tensor::scalar(3.0));
  CHECK_THROWS_AS(g.backward(y), StateError);
  g.forward();
  g.backward(y);
  CHECK(g.grad(x).value() == doctest::Approx(6.0));
}

TEST_CASE("random 3-layer MLP matches finite differences") {
  Rng rng(42);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor w1 = random_tensor({4, 5}, rng, 0.7);
  Tensor b1 = random_tensor({5}, rng, 0.2);
  Tensor w2 = random_tensor({5, 4}, rng, 0.7);
  Tensor b2 = random_tensor({4}, rng, 0.2);
  Tensor w3 = random_tensor({4, 1}, rng, 0.7);
  auto fn = [](Graph& g, const std::vector<Graph::NodeId>& in) {
    auto h1 = g.tanh_(g.linear(in[0], in[1], in[2]));
    auto h2 = g.sigmoid(g.linear(h1, in[3], in[4]));
    auto out = g.matmul(h2, in[5]);
    return g.mean_all(g.mul(out, out));
  };
  auto rep = gradcheck(fn, {x, w1, b1, w2, b2, w3}, 1e-5, 1e-4);
  INFO(rep.diagnostic);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradcheck per-primitive coverage") {
  Rng rng(13);
  // each case: inputs and a scalar composition touching one primitive
  SUBCASE("add broadcast") {
    Tensor a = random_tensor({3, 1, 4}, rng);
    Tensor b = random_tensor({2, 4}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          return g.mean_all(g.add(in[0], in[1]));
        },
        {a, b}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("mul broadcast") {
    Tensor a = random_tensor({3, 2, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          return g.mean_all(g.mul(in[0], in[1]));
        },
        {a, b}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("matmul batched") {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          return g.mean_all(g.matmul(in[0], in[1]));
        },
        {a, b}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("conv1d dilated causal") {
    Tensor x = random_tensor({2, 3, 8}, rng);
    Tensor w = random_tensor({3, 3, 2}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          auto y = g.conv1d(in[0], in[1], 2, 2);
          return g.mean_all(g.mul(y, y));
        },
        {x, w}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("softmax axis") {
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor v = random_tensor({2, 3, 4}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          return g.mean_all(g.mul(g.softmax(in[0], 1), in[1]));
        },
        {x, v}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("concat gather permute reshape reductions") {
    Tensor a = random_tensor({2, 2, 3}, rng);
    Tensor b = random_tensor({2, 1, 3}, rng);
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          auto c = g.concat({in[0], in[1]}, 1);          // [2,3,3]
          auto gth = g.gather(c, 2, {2, 0});             // [2,3,2]
          auto p = g.permute(gth, {1, 0, 2});            // [3,2,2]
          auto r = g.reshape(p, Shape{3, 4});
          auto s = g.sum_axis(r, 1);                     // [3]
          return g.mean_all(g.mul(s, s));
        },
        {a, b}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
  SUBCASE("activations") {
    Tensor x = random_tensor({5, 5}, rng);
    x.flat() += 0.05;  // keep away from the relu kink
    auto rep = gradcheck(
        [](Graph& g, const std::vector<Graph::NodeId>& in) {
          auto y = g.add(g.tanh_(in[0]), g.add(g.sigmoid(in[0]), g.exp_(g.scale(in[0], 0.3))));
          return g.mean_all(g.mul(y, g.relu(in[0])));
        },
        {x}, 1e-5, 1e-4);
    CHECK(rep.pass);
  }
}

TEST_CASE("gradcheck: linear map passes, abs at zero is flagged") {
  Tensor x({3}, {0.3, -0.7, 1.1});
  auto lin = gradcheck(
      [](Graph& g, const std::vector<Graph::NodeId>& in) { return g.sum_all(g.scale(in[0], 2.0)); },
      {x}, 1e-5, 1e-4);
  CHECK(lin.pass);

  Tensor z({1}, std::vector<double>{0.0});
  auto rep = gradcheck(
      [](Graph& g, const std::vector<Graph::NodeId>& in) { return g.sum_all(g.abs_(in[0])); },
      {z}, 1e-5, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst.kink);
  CHECK(rep.diagnostic.find("non-differentiable") != std::string::npos);
}

TEST_CASE("gradcheck rejects non-finite outputs") {
  Tensor x({1}, std::vector<double>{800.0});
  CHECK_THROWS_AS(gradcheck(
                      [](Graph& g, const std::vector<Graph::NodeId>& in) {
                        return g.sum_all(g.exp_(in[0]));  // overflows to inf
                      },
                      {x}, 1e-5, 1e-4),
                  StateError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParamStore params;
  Rng rng(3);
  params.create("w", random_tensor({3, 3}, rng));
  Tensor before = params.at("w");
  Adam opt(AdamConfig{.lr = 0.1, .weight_decay = 0.0});
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::zeros({3, 3}));
  opt.step(params, grads);
  for (long i = 0; i < before.numel(); ++i) CHECK(params.at("w")[i] == before[i]);
}

TEST_CASE("adam: descent on quadratic") {
  ParamStore params;
  params.create("w", Tensor::scalar(1.0));
  Adam opt(AdamConfig{.lr = 0.1});
  {
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor::scalar(2.0 * params.at("w").value()));
    opt.step(params, grads);
    CHECK(params.at("w").value() < 1.0);
  }
  // 200 steps on f(w) = w^2 drive |w| under 1e-2
  for (int i = 1; i < 200; ++i) {
    std::map<std::string, Tensor> grads;
    grads.emplace("w", Tensor::scalar(2.0 * params.at("w").value()));
    opt.step(params, grads);
  }
  CHECK(std::abs(params.at("w").value()) < 1e-2);
}

TEST_CASE("adam: NaN gradient is an error naming the parameter") {
  ParamStore params;
  params.create("w13", Tensor::scalar(1.0));
  Adam opt;
  std::map<std::string, Tensor> grads;
  grads.emplace("w13", Tensor::scalar(std::nan("")));
  CHECK_THROWS_WITH_AS(opt.step(params, grads), doctest::Contains("w13"), StateError);
}

TEST_CASE("weight blob round-trip") {
  ParamStore params;
  Rng rng(11);
  params.create("alpha", random_tensor({2, 3}, rng));
  params.create("beta", random_tensor({4}, rng));
  auto dir = std::filesystem::temp_directory_path() / "ctsnas_blob_test";
  std::filesystem::create_directories(dir);
  save_params(dir / "model", params);
  ParamStore back = load_params(dir / "model");
  CHECK(back.size() == params.size());
  CHECK(content_hash(back) == content_hash(params));
  for (const auto& [name, t] : params) {
    const Tensor& r = back.at(name);
    REQUIRE(r.shape() == t.shape());
    for (long i = 0; i < t.numel(); ++i) CHECK(r[i] == t[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("graph double backward without reset is a state error") {
  Graph g;
  auto x = g.param("x", Tensor::scalar(2.0));
  auto y = g.mul(x, x);
  g.backward(y);
  CHECK_THROWS_AS(g.backward(y), StateError);
  g.zero_grad();
  g.backward(y);
  CHECK(g.grad(x).value() == doctest::Approx(4.0));
}
