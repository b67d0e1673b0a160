#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "m2s/tensor.hpp"

namespace m2s::test {

inline std::filesystem::path golden_dir() { return M2S_GOLDEN_DIR; }

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return Tensor(s, std::move(v));
}

// Values bounded away from zero so |x| and relu stay off their kinks.
inline Tensor random_offkink(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<Real> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = static_cast<Real>(sign(rng) ? mag(rng) : -mag(rng));
  return Tensor(s, std::move(v));
}

inline double rel_err(double a, double b) {
  const double d = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / d;
}

// Central differences of f() with respect to every entry of t.
inline std::vector<double> numeric_grad(Tensor& t, const std::function<double()>& f, double eps = 1e-5) {
  std::vector<double> g(static_cast<std::size_t>(t.numel()));
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Real saved = data[i];
    data[i] = saved + static_cast<Real>(eps);
    const double up = f();
    data[i] = saved - static_cast<Real>(eps);
    const double down = f();
    data[i] = saved;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

// A parsed golden tensor line: "<name> n c h w values...".
struct GoldenTensor {
  Shape shape;
  std::vector<Real> values;
  Tensor tensor() const { return Tensor(shape, values); }
};

struct GoldenCase {
  std::string header;
  std::map<std::string, GoldenTensor> tensors;
};

inline std::vector<GoldenCase> read_ops_golden(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<GoldenCase> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("case ", 0) == 0) {
      out.push_back({line.substr(5), {}});
      continue;
    }
    std::istringstream is(line);
    std::string name;
    GoldenTensor t;
    is >> name >> t.shape.n >> t.shape.c >> t.shape.h >> t.shape.w;
    double v;
    while (is >> v) t.values.push_back(static_cast<Real>(v));
    out.back().tensors[name] = t;
  }
  return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace m2s::test
