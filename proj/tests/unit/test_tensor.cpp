#include <gtest/gtest.h>

#include <cstring>

#include "m2s/checkpoint.hpp"
#include "m2s/tensor.hpp"
#include "support.hpp"

using namespace m2s;
using namespace m2s::test;

namespace {

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

// max |a - n| / max(max |a|, max |n|)
double vec_rel_err(std::span<const Real> a, const std::vector<double>& n) {
  double diff = 0, scale = 1e-12;
  for (std::size_t i = 0; i < n.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(static_cast<double>(a[i])), std::abs(n[i])});
  }
  return diff / scale;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Contract;
}

// Checks every input's analytic gradient of sum(op(inputs) * r) against central differences.
double check_op(std::vector<Tensor> inputs, const std::function<Tensor(const std::vector<Tensor>&)>& op,
                std::mt19937_64& rng) {
  for (auto& t : inputs) t.set_requires_grad(true);
  Tensor probe;
  {
    probe = op(inputs);
  }
  const Tensor r = random_tensor(probe.shape(), rng);
  {
    Tape tape;
    Tensor loss = sum(mul(op(inputs), r));
    tape.backward(loss);
  }
  auto value = [&] { return dot(op(inputs), r); };
  double worst = 0;
  for (auto& t : inputs) {
    std::vector<Real> analytic(t.grad().begin(), t.grad().end());
    const auto numeric = numeric_grad(t, value);
    worst = std::max(worst, vec_rel_err(analytic, numeric));
  }
  return worst;
}

}  // namespace

TEST(Tensor, ShapeMustBePositiveAndMatchData) {
  EXPECT_EQ(kind_of([] { Tensor(Shape{0, 1, 1, 1}); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([] { Tensor(Shape{1, 1, 2, 2}, std::vector<Real>{1, 2, 3}); }), ErrorKind::Dimension);
  Tensor t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120);
  EXPECT_EQ(t.data().size(), 120u);
}

TEST(Conv2d, IdentityKernel) {
  Tensor x(Shape{1, 1, 1, 1}, 3.0);
  Tensor w(Shape{1, 1, 1, 1}, 1.0);
  Tensor b(Shape{1, 1, 1, 1}, 0.0);
  EXPECT_EQ(conv2d(x, w, b, 1, 0).item(), 3.0);
}

TEST(Conv2d, OnesKernelCountsWindowOverlap) {
  Tensor x(Shape{1, 1, 3, 3}, 1.0);
  Tensor w(Shape{1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 1, 1);
  const std::vector<Real> expect{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(std::vector<Real>(y.data().begin(), y.data().end()), expect);
}

TEST(Conv2d, OutputSizeFormula) {
  std::mt19937_64 rng(1);
  for (int h : {5, 6, 7, 32}) {
    for (int stride : {1, 2}) {
      for (int k : {1, 3, 5}) {
        for (int pad : {0, (k - 1) / 2}) {
          Tensor x = random_tensor(Shape{1, 2, h, h + 1}, rng);
          Tensor w = random_tensor(Shape{3, 2, k, k}, rng);
          Tensor y = conv2d(x, w, Tensor(), stride, pad);
          EXPECT_EQ(y.shape().h, (h + 2 * pad - k) / stride + 1);
          EXPECT_EQ(y.shape().w, (h + 1 + 2 * pad - k) / stride + 1);
          EXPECT_EQ(y.shape().c, 3);
        }
      }
    }
  }
}

TEST(Conv2d, Errors) {
  Tensor x(Shape{1, 2, 5, 5});
  EXPECT_EQ(kind_of([&] { conv2d(x, Tensor(Shape{1, 2, 2, 2}), Tensor(), 1, 0); }), ErrorKind::InvalidKernel);
  EXPECT_EQ(kind_of([&] { conv2d(x, Tensor(Shape{1, 2, 7, 7}), Tensor(), 1, 3); }), ErrorKind::InvalidKernel);
  try {
    conv2d(x, Tensor(Shape{1, 3, 3, 3}), Tensor(), 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { conv2d(x, Tensor(Shape{2, 2, 3, 3}), Tensor(Shape{3, 1, 1, 1}), 1, 1); }),
            ErrorKind::Dimension);
}

TEST(Conv2d, WeightGradOfSumIsPatchSum) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor(Shape{1, 2, 5, 5}, rng);
  Tensor w = param(random_tensor(Shape{1, 2, 3, 3}, rng));
  {
    Tape tape;
    tape.backward(sum(conv2d(x, w, Tensor(), 1, 1)));
  }
  // Oracle: each tap sums the input values it touches over all output positions.
  for (int ci = 0; ci < 2; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double s = 0;
        for (int oy = 0; oy < 5; ++oy) {
          for (int ox = 0; ox < 5; ++ox) {
            const int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy >= 0 && iy < 5 && ix >= 0 && ix < 5) s += x.at(0, ci, iy, ix);
          }
        }
        EXPECT_NEAR(w.grad()[static_cast<std::size_t>((ci * 3 + ky) * 3 + kx)], s, 1e-12);
      }
    }
  }
  auto value = [&] { return sum(conv2d(x, w, Tensor(), 1, 1)).item(); };
  std::vector<Real> analytic(w.grad().begin(), w.grad().end());
  EXPECT_LT(vec_rel_err(analytic, numeric_grad(w, value)), 1e-6);
}

TEST(Conv2d, MatchesTorchForwardAndBackward) {
  for (const auto& c : read_ops_golden(golden_dir() / "ops.golden")) {
    if (c.header.rfind("conv", 0) != 0) continue;
    SCOPED_TRACE(c.header);
    const int stride = c.header.find("stride=2") != std::string::npos ? 2 : 1;
    const int pad = std::stoi(c.header.substr(c.header.find("pad=") + 4));
    Tensor x = param(c.tensors.at("x").tensor());
    Tensor w = param(c.tensors.at("w").tensor());
    Tensor b = param(c.tensors.at("b").tensor());
    const Tensor r = c.tensors.at("r").tensor();
    Tensor y;
    {
      Tape tape;
      y = conv2d(x, w, b, stride, pad);
      tape.backward(sum(mul(y, r)));
    }
    auto expect = [](std::span<const Real> got, const GoldenTensor& want) {
      ASSERT_EQ(got.size(), want.values.size());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want.values[i], 1e-12) << i;
    };
    ASSERT_EQ(y.shape(), c.tensors.at("y").shape);
    expect(y.data(), c.tensors.at("y"));
    expect(x.grad(), c.tensors.at("dx"));
    expect(w.grad(), c.tensors.at("dw"));
    expect(b.grad(), c.tensors.at("db"));
  }
}

TEST(Conv2d, BitReproducible) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor(Shape{2, 5, 9, 7}, rng);
  Tensor w = random_tensor(Shape{6, 5, 3, 3}, rng);
  Tensor b = random_tensor(Shape{6, 1, 1, 1}, rng);
  Tensor a = conv2d(x, w, b, 2, 1);
  Tensor c = conv2d(x, w, b, 2, 1);
  EXPECT_EQ(0, std::memcmp(a.ptr(), c.ptr(), a.data().size_bytes()));
}

TEST(BoxFilter, IdentityAndOnes) {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor(Shape{2, 3, 4, 5}, rng);
  Tensor y = box_filter(x, 1);
  EXPECT_EQ(std::vector<Real>(y.data().begin(), y.data().end()),
            std::vector<Real>(x.data().begin(), x.data().end()));
  Tensor ones(Shape{1, 1, 3, 3}, 1.0);
  Tensor z = box_filter(ones, 3);
  EXPECT_EQ(std::vector<Real>(z.data().begin(), z.data().end()), (std::vector<Real>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(BoxFilter, InvalidKernel) {
  Tensor x(Shape{1, 1, 5, 5});
  EXPECT_EQ(kind_of([&] { box_filter(x, 2); }), ErrorKind::InvalidKernel);
  EXPECT_EQ(kind_of([&] { box_filter(x, 4); }), ErrorKind::InvalidKernel);
  EXPECT_EQ(kind_of([&] { box_filter(x, 7); }), ErrorKind::InvalidKernel);
}

TEST(BoxFilter, BitIdenticalToAllOnesDepthwiseConv) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor(Shape{2, 3, 7 + trial, 6 + 2 * trial}, rng, -3, 3);
    for (int k : {1, 3, 5}) {
      Tensor box = box_filter(x, k);
      const Tensor ones(Shape{1, 1, k, k}, 1.0);
      for (int c = 0; c < 3; ++c) {
        Tensor ref = conv2d(select_channel(x, c), ones, Tensor(), 1, (k - 1) / 2);
        Tensor got = select_channel(box, c);
        ASSERT_EQ(0, std::memcmp(ref.ptr(), got.ptr(), ref.data().size_bytes())) << "k=" << k << " c=" << c;
      }
    }
  }
}

TEST(BoxFilter, BackwardSpreadsUniformly) {
  Tensor x = param(Tensor(Shape{1, 1, 4, 4}, 0.5));
  {
    Tape tape;
    tape.backward(sum(box_filter(x, 3)));
  }
  // Each input pixel contributes to every output whose window covers it.
  const std::vector<Real> expect{4, 6, 6, 4, 6, 9, 9, 6, 6, 9, 9, 6, 4, 6, 6, 4};
  EXPECT_EQ(std::vector<Real>(x.grad().begin(), x.grad().end()), expect);
}

TEST(Elementwise, Examples) {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor(Shape{1, 2, 3, 3}, rng);
  const Tensor zero = abs(sub(x, x));
  for (Real v : zero.data()) EXPECT_EQ(v, 0.0);
  Tensor r = relu(Tensor(Shape{1, 1, 1, 2}, std::vector<Real>{-2, 3}));
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[1], 3.0);

  Tensor a = param(Tensor(Shape{}, -1.5));
  {
    Tape tape;
    tape.backward(abs(a));
  }
  EXPECT_EQ(a.grad()[0], -1.0);
  auto value = [&] { return abs(a).item(); };
  EXPECT_LT(std::abs(numeric_grad(a, value)[0] - (-1.0)), 1e-8);

  Tensor z = param(Tensor(Shape{}, 0.0));
  {
    Tape tape;
    tape.backward(abs(z));
  }
  EXPECT_EQ(z.grad()[0], 0.0);
}

TEST(Elementwise, ShapeMismatchIsDimensionError) {
  Tensor a(Shape{1, 1, 2, 2}), b(Shape{1, 1, 2, 3});
  EXPECT_EQ(kind_of([&] { add(a, b); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([&] { sub(a, b); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([&] { mul(a, b); }), ErrorKind::Dimension);
}

TEST(Elementwise, SubAntisymmetricAbsSymmetric) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    Tensor a = random_tensor(Shape{2, 3, 4, 5}, rng), b = random_tensor(Shape{2, 3, 4, 5}, rng);
    Tensor ab = sub(a, b), ba = sub(b, a);
    Tensor d1 = abs(ab), d2 = abs(ba);
    for (std::size_t j = 0; j < ab.data().size(); ++j) {
      EXPECT_EQ(ab.data()[j], -ba.data()[j]);
      EXPECT_EQ(d1.data()[j], d2.data()[j]);
    }
  }
}

TEST(Resize, Examples) {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor(Shape{1, 2, 4, 4}, rng);
  Tensor same = bilinear_resize(x, 4, 4);
  EXPECT_EQ(std::vector<Real>(same.data().begin(), same.data().end()),
            std::vector<Real>(x.data().begin(), x.data().end()));
  Tensor q(Shape{1, 1, 2, 2}, std::vector<Real>{1, 3, 5, 7});
  EXPECT_EQ(bilinear_resize(q, 1, 1).item(), 4.0);
}

TEST(Resize, PreservesConstantsExactly) {
  for (Real c : {0.0, 1.0, -2.5, 0.1, 1e-3}) {
    Tensor x(Shape{1, 2, 3, 5}, c);
    for (auto [h, w] : {std::pair{1, 1}, {3, 5}, {7, 2}, {6, 10}, {13, 17}}) {
      const Tensor y = bilinear_resize(x, h, w);
      for (Real v : y.data()) ASSERT_EQ(v, c);
    }
  }
}

TEST(Resize, MatchesTorch) {
  for (const auto& c : read_ops_golden(golden_dir() / "ops.golden")) {
    if (c.header.rfind("resize", 0) != 0) continue;
    SCOPED_TRACE(c.header);
    Tensor x = param(c.tensors.at("x").tensor());
    const auto& want = c.tensors.at("y");
    Tensor y;
    {
      Tape tape;
      y = bilinear_resize(x, want.shape.h, want.shape.w);
      tape.backward(sum(mul(y, c.tensors.at("r").tensor())));
    }
    for (std::size_t i = 0; i < want.values.size(); ++i) EXPECT_NEAR(y.data()[i], want.values[i], 1e-12);
    const auto& dx = c.tensors.at("dx");
    for (std::size_t i = 0; i < dx.values.size(); ++i) EXPECT_NEAR(x.grad()[i], dx.values[i], 1e-12);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x = param(Tensor(Shape{2, 3, 4, 5}, 0.3));
  {
    Tape tape;
    tape.backward(sum(x));
  }
  for (Real g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, UnusedParameterGetsZero) {
  Tensor x = param(Tensor(Shape{1, 1, 2, 2}, 1.0));
  Tensor p = param(Tensor(Shape{1, 1, 2, 2}, 2.0));
  {
    Tape tape;
    tape.backward(sum(x));
  }
  for (Real g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = param(Tensor(Shape{1, 1, 2, 2}, 1.0));
  Tape tape;
  Tensor y = mul_scalar(x, 2.0);
  EXPECT_EQ(kind_of([&] { tape.backward(y); }), ErrorKind::Contract);
}

TEST(Backward, LeafGradientsAccumulateAcrossCalls) {
  Tensor x = param(Tensor(Shape{1, 1, 1, 3}, 1.0));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(mul_scalar(x, 3.0)));
  }
  for (Real g : x.grad()) EXPECT_EQ(g, 6.0);
  x.zero_grad();
  for (Real g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NoTapeNoRecording) {
  Tensor x = param(Tensor(Shape{1, 1, 2, 2}, 1.0));
  Tape tape;
  Tensor c(Shape{1, 1, 2, 2}, 4.0);  // constants never record
  add(c, c);
  EXPECT_EQ(tape.size(), 0u);
  add(x, c);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Backward, NonFiniteIsNumericError) {
  Tensor x(Shape{1, 1, 1, 2}, std::vector<Real>{1.0, std::numeric_limits<Real>::quiet_NaN()});
  EXPECT_EQ(kind_of([&] { check_finite(x, "probe"); }), ErrorKind::Numeric);
}

// Every differentiable op against central differences (eps 1e-5) on 20+ random instances.
TEST(GradientProperty, AllOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> dim(2, 5);
  using Op = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    std::function<std::vector<Tensor>(Shape)> make;
    Op op;
  };
  std::vector<Case> cases{
      {"conv2d_k3s1",
       [&](Shape s) {
         return std::vector<Tensor>{random_tensor(s, rng), random_tensor(Shape{2, s.c, 3, 3}, rng),
                                    random_tensor(Shape{2, 1, 1, 1}, rng)};
       },
       [](const std::vector<Tensor>& v) { return conv2d(v[0], v[1], v[2], 1, 1); }},
      {"conv2d_k3s2",
       [&](Shape s) {
         return std::vector<Tensor>{random_tensor(s, rng), random_tensor(Shape{3, s.c, 3, 3}, rng),
                                    random_tensor(Shape{3, 1, 1, 1}, rng)};
       },
       [](const std::vector<Tensor>& v) { return conv2d(v[0], v[1], v[2], 2, 1); }},
      {"conv2d_k1",
       [&](Shape s) {
         return std::vector<Tensor>{random_tensor(s, rng), random_tensor(Shape{2, s.c, 1, 1}, rng),
                                    random_tensor(Shape{2, 1, 1, 1}, rng)};
       },
       [](const std::vector<Tensor>& v) { return conv2d(v[0], v[1], v[2], 1, 0); }},
      {"box3", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return box_filter(v[0], 3); }},
      {"box5", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return box_filter(v[0], 5); }},
      {"relu", [&](Shape s) { return std::vector<Tensor>{random_offkink(s, rng)}; },
       [](const std::vector<Tensor>& v) { return relu(v[0]); }},
      {"abs", [&](Shape s) { return std::vector<Tensor>{random_offkink(s, rng)}; },
       [](const std::vector<Tensor>& v) { return abs(v[0]); }},
      {"sigmoid", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng, -4, 4)}; },
       [](const std::vector<Tensor>& v) { return sigmoid(v[0]); }},
      {"add", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng), random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return add(v[0], v[1]); }},
      {"sub", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng), random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return sub(v[0], v[1]); }},
      {"mul", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng), random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return mul(v[0], v[1]); }},
      {"mul_scalar", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return mul_scalar(v[0], -1.75); }},
      {"sum_hw", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return sum(v[0], {2, 3}); }},
      {"mean_c", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return mean(v[0], {1}); }},
      {"mean_all", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return mean(v[0]); }},
      {"l2_norm", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return l2_norm(v[0]); }},
      {"resize_up", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return bilinear_resize(v[0], v[0].shape().h * 2 + 1, v[0].shape().w + 3); }},
      {"resize_down", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return bilinear_resize(v[0], 1 + v[0].shape().h / 2, 2); }},
      {"select_channel", [&](Shape s) { return std::vector<Tensor>{random_tensor(s, rng)}; },
       [](const std::vector<Tensor>& v) { return select_channel(v[0], v[0].shape().c - 1); }},
      {"repeat_channels",
       [&](Shape s) { return std::vector<Tensor>{random_tensor(Shape{s.n, 1, s.h, s.w}, rng)}; },
       [](const std::vector<Tensor>& v) { return repeat_channels(v[0], 3); }},
  };
  for (const auto& c : cases) {
    for (int trial = 0; trial < 20; ++trial) {
      const Shape s{1 + trial % 2, dim(rng), dim(rng) + 1, dim(rng) + 1};
      const double err = check_op(c.make(s), c.op, rng);
      ASSERT_LT(err, 1e-5) << c.name << " trial " << trial << " shape " << s.str();
    }
  }
}

TEST(FaultInjection, CorruptsMatchingBackwardRule) {
  std::mt19937_64 rng(10);
  Tensor x = param(random_tensor(Shape{1, 1, 3, 3}, rng));
  {
    FaultInjection fault("sigmoid", 2.0);
    Tape tape;
    tape.backward(sum(sigmoid(x)));
  }
  auto value = [&] { return sum(sigmoid(x)).item(); };
  std::vector<Real> analytic(x.grad().begin(), x.grad().end());
  EXPECT_NEAR(vec_rel_err(analytic, numeric_grad(x, value)), 0.5, 1e-6);
}

TEST(Checkpoint, RoundTrip) {
  std::mt19937_64 rng(11);
  Checkpoint c;
  c.metadata["meta.config"] = "fusion=SU\nlayers=ünïcode\n";
  c.tensors.emplace_back("a.weight", random_tensor(Shape{2, 3, 3, 3}, rng));
  c.tensors.emplace_back("b", Tensor(Shape{}, 4.0));
  const auto bytes = encode_checkpoint(c);
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "M2SN");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  const Checkpoint d = decode_checkpoint(bytes);
  EXPECT_EQ(d.metadata, c.metadata);
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(d.tensors[0].first, "a.weight");
  EXPECT_EQ(d.tensors[0].second.shape(), c.tensors[0].second.shape());
  EXPECT_EQ(0, std::memcmp(d.tensors[0].second.ptr(), c.tensors[0].second.ptr(),
                           c.tensors[0].second.data().size_bytes()));
  EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, CorruptInputIsFormatError) {
  Checkpoint c;
  c.tensors.emplace_back("t", Tensor(Shape{1, 1, 2, 2}, 1.0));
  auto bytes = encode_checkpoint(c);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad_magic); }), ErrorKind::Format);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(truncated); }), ErrorKind::Format);
  auto bad_version = bytes;
  bad_version[4] = 99;
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad_version); }), ErrorKind::Format);
  EXPECT_EQ(kind_of([&] { read_checkpoint("/nonexistent/x.m2sn"); }), ErrorKind::Io);
}
