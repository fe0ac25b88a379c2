#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "pcnet/engine.hpp"
#include "support/op_cases.hpp"
#include "support/oracles.hpp"

using namespace pcnet;
using Catch::Approx;

namespace {

Tensor<double> seq(const Shape& s, double start = 1.0) {
  Tensor<double> t(s);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = start + static_cast<double>(i);
  return t;
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

TEST_CASE("shape and tensor basics") {
  Shape s{2, 3, 4};
  CHECK(s.numel() == 24);
  CHECK(s.spatial() == std::vector<std::size_t>{4});
  CHECK_THROWS_AS(Shape({2, 0}), ShapeError);
  CHECK_THROWS_AS(Shape({1, 1, 1, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);
  auto t = seq(Shape{2, 3});
  CHECK(t.at(1, 2) == 6.0);
  CHECK(t.reshaped(Shape{3, 2}).at(2, 1) == 6.0);
}

TEST_CASE("PCTN container layout and round trip") {
  Tensor<float> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  std::stringstream ss;
  io::write_tensor(ss, t);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 2 + 1 + 1 + 2 * 8 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "PCTN");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);  // f32
  CHECK(bytes[7] == 2);  // rank
  CHECK(bytes[8] == 2);
  CHECK(bytes[16] == 3);
  float first;
  std::memcpy(&first, bytes.data() + 24, 4);
  CHECK(first == 1.0f);

  auto back = io::read_tensor<float>(ss);
  CHECK(back == t);

  Tensor<std::uint8_t> m(Shape{3}, {0, 1, 1});
  Tensor<double> d(Shape{1, 2}, {0.25, -1.5});
  std::stringstream s2;
  io::write_tensor(s2, m);
  io::write_tensor(s2, d);
  CHECK(io::read_tensor<std::uint8_t>(s2) == m);
  CHECK(io::read_tensor<double>(s2) == d);

  std::stringstream s3;
  io::write_tensor(s3, d);
  CHECK_THROWS_AS(io::read_tensor<float>(s3), DTypeError);
  std::stringstream bad("PCTX....");
  CHECK_THROWS_AS(io::read_tensor<float>(bad), DataError);
}

TEST_CASE("convolve: hand examples") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::ones(Shape{1, 1, 3, 3}));
  auto w = tape.constant(Tensor<double>::ones(Shape{1, 1, 3, 3}));
  CHECK(tape.value(convolve(tape, x, w, std::nullopt))[0] == 9.0);

  auto img = seq(Shape{1, 1, 5, 5});
  auto id = convolve(tape, tape.constant(img), tape.constant(Tensor<double>::ones(Shape{1, 1, 1, 1})),
                     tape.constant(Tensor<double>::zeros(Shape{1})));
  CHECK(tape.value(id) == img);
}

TEST_CASE("convolve matches the nested-loop reference") {
  std::mt19937_64 rng(11);
  for (int c = 0; c < 25; ++c) {
    const std::size_t n = draw(rng, 1, 2), ci = draw(rng, 1, 4), co = draw(rng, 1, 4), k = draw(rng, 1, 3);
    const std::size_t stride = draw(rng, 1, 2), pad = draw(rng, 0, 1);
    const std::size_t h = draw(rng, k, 9), w = draw(rng, k, 9);
    auto x = oracle::random_tensor<double>(Shape{n, ci, h, w}, rng);
    auto kern = oracle::random_tensor<double>(Shape{co, ci, k, k}, rng);
    auto b = oracle::random_tensor<double>(Shape{co}, rng);
    Tape<double> tape;
    ConvOptions opt{{stride}, {pad}};
    auto y = tape.value(convolve(tape, tape.constant(x), tape.constant(kern), tape.constant(b), opt));
    auto ref = oracle::conv2d(x, kern, {b.data().begin(), b.data().end()}, stride, pad);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-6);
  }
  for (int c = 0; c < 8; ++c) {
    const std::size_t ci = draw(rng, 1, 2), co = draw(rng, 1, 3), k = draw(rng, 1, 3), pad = draw(rng, 0, 1);
    auto x = oracle::random_tensor<double>(Shape{2, ci, draw(rng, k, 7), draw(rng, k, 7), draw(rng, k, 7)}, rng);
    auto kern = oracle::random_tensor<double>(Shape{co, ci, k, k, k}, rng);
    Tape<double> tape;
    auto y = tape.value(convolve(tape, tape.constant(x), tape.constant(kern), std::nullopt, {{1}, {pad}}));
    auto ref = oracle::conv3d(x, kern, {}, 1, pad);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("convolve: shape errors name the axis") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1, 2, 4, 4}));
  auto w_bad_c = tape.constant(Tensor<double>(Shape{1, 3, 3, 3}));
  CHECK_THROWS_AS(convolve(tape, x, w_bad_c, std::nullopt), ShapeError);
  auto w_big = tape.constant(Tensor<double>(Shape{1, 2, 5, 3}));
  try {
    convolve(tape, x, w_big, std::nullopt);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis") != std::string::npos);
  }
  auto w_rank = tape.constant(Tensor<double>(Shape{1, 2, 3, 3, 3}));
  CHECK_THROWS_AS(convolve(tape, x, w_rank, std::nullopt), ShapeError);
}

TEST_CASE("max_pool values, ties and gradient routing") {
  {
    Tape<double> tape;
    auto y = tape.value(max_pool(tape, tape.constant(seq(Shape{1, 1, 4, 4})), {2}, {2}));
    CHECK(y == Tensor<double>(Shape{1, 1, 2, 2}, {6, 8, 14, 16}));
  }
  {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
    auto y = max_pool(tape, x, {2}, {2});
    CHECK(tape.value(y)[0] == 4.0);
    tape.backward(y);
    CHECK(tape.grad(x) == Tensor<double>(Shape{1, 1, 2, 2}, {0, 0, 0, 1}));
  }
  {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>::full(Shape{1, 1, 2, 2}, 3.0));
    auto y = max_pool(tape, x, {2}, {2});
    tape.backward(y);
    CHECK(tape.grad(x) == Tensor<double>(Shape{1, 1, 2, 2}, {1, 0, 0, 0}));
  }
  std::mt19937_64 rng(3);
  for (int c = 0; c < 20; ++c) {
    const std::size_t k = draw(rng, 2, 3);
    auto xv = oracle::random_tensor<double>(Shape{2, 2, k * draw(rng, 1, 4), k * draw(rng, 1, 4)}, rng);
    Tape<double> tape;
    auto x = tape.leaf(xv);
    auto y = max_pool(tape, x, {k}, {k});
    CHECK(tape.value(y) == oracle::window_max_2d(xv, k));
    auto g = oracle::random_tensor<double>(tape.shape(y), rng);
    auto loss = sum(tape, multiply(tape, y, tape.constant(g)));
    tape.backward(loss);
    double gin = 0, gout = 0;
    for (double v : tape.grad(x).data()) gin += v;
    for (double v : g.data()) gout += v;
    CHECK(gin == Approx(gout).margin(1e-12));
  }
  Tape<double> tape;
  CHECK_THROWS_AS(max_pool(tape, tape.constant(Tensor<double>(Shape{1, 1, 2, 2})), {3}, {3}), ShapeError);
}

TEST_CASE("adaptive_avg_pool matches bin means") {
  {
    Tape<double> tape;
    auto y = tape.value(adaptive_avg_pool(tape, tape.constant(Tensor<double>(Shape{1, 1, 4}, {1, 2, 3, 4})), {2}));
    CHECK(y == Tensor<double>(Shape{1, 1, 2}, {1.5, 3.5}));
  }
  {
    Tape<double> tape;
    auto y = tape.value(adaptive_avg_pool(tape, tape.constant(Tensor<double>::full(Shape{1, 1, 48, 48}, 0.5)), {3}));
    for (double v : y.data()) CHECK(v == 0.5);
  }
  std::mt19937_64 rng(5);
  for (int c = 0; c < 20; ++c) {
    const std::size_t out = draw(rng, 1, 3);
    auto xv = oracle::random_tensor<double>(Shape{2, 3, draw(rng, out, 11), draw(rng, out, 11)}, rng);
    Tape<double> tape;
    auto x = tape.leaf(xv);
    auto y = adaptive_avg_pool(tape, x, {out});
    auto ref = oracle::bin_mean_2d(xv, out, out);
    for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(tape.value(y)[i] == Approx(ref[i]).margin(1e-12));
    tape.backward(sum(tape, y));
    double gsum = 0;
    for (double v : tape.grad(x).data()) gsum += v;
    CHECK(gsum == Approx(static_cast<double>(tape.shape(y).numel())));
  }
  Tape<double> tape;
  CHECK_THROWS_AS(adaptive_avg_pool(tape, tape.constant(Tensor<double>(Shape{1, 1, 2, 2})), {3}), ShapeError);
}

TEST_CASE("upsample_linear: half-pixel convention") {
  Tape<double> tape;
  auto y = tape.value(upsample_linear(tape, tape.constant(Tensor<double>(Shape{1, 1, 2}, {0, 2}))));
  CHECK(y == Tensor<double>(Shape{1, 1, 4}, {0, 0.5, 1.5, 2}));
  CHECK(tape.shape(upsample_linear(tape, tape.constant(Tensor<double>(Shape{1, 8, 12, 12})))) ==
        Shape{1, 8, 24, 24});
  auto c = tape.value(upsample_linear(tape, tape.constant(Tensor<double>::full(Shape{1, 2, 3, 2, 2}, 0.7))));
  CHECK(c.shape() == Shape{1, 2, 6, 4, 4});
  for (double v : c.data()) CHECK(v == Approx(0.7));

  // Separable 2D: rows then columns of the 1D oracle.
  std::mt19937_64 rng(9);
  auto xv = oracle::random_tensor<double>(Shape{1, 1, 3, 5}, rng);
  auto up = tape.value(upsample_linear(tape, tape.constant(xv)));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < 3; ++i) rows.push_back(oracle::upsample_1d({&xv.at(0, 0, i, 0), &xv.at(0, 0, i, 0) + 5}));
  for (std::size_t j = 0; j < 10; ++j) {
    std::vector<double> col{rows[0][j], rows[1][j], rows[2][j]};
    auto ref = oracle::upsample_1d(col);
    for (std::size_t i = 0; i < 6; ++i) CHECK(up.at(0, 0, i, j) == Approx(ref[i]).margin(1e-12));
  }
}

TEST_CASE("batch_norm train and eval modes") {
  std::mt19937_64 rng(2);
  auto xv = oracle::random_tensor<double>(Shape{4, 3, 5, 5}, rng, -2, 3);
  Tape<double> tape;
  BatchNormStats<double> stats(3);
  auto g = tape.leaf(Tensor<double>::ones(Shape{3}));
  auto b = tape.leaf(Tensor<double>::zeros(Shape{3}));
  auto y = batch_norm(tape, tape.constant(xv), g, b, stats, BnMode::kTrain);
  const auto& yv = tape.value(y);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) m += yv[(n * 3 + c) * 25 + i];
    m /= 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(yv[(n * 3 + c) * 25 + i] - m, 2);
    v /= 100;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1) < 1e-5);
  }
  CHECK(stats.running_mean[0] != 0.0);
  tape.backward(sum(tape, y));
  for (double v : tape.grad(b).data()) CHECK(v == Approx(100.0));

  Tape<double> t2;
  BatchNormStats<double> identity(3);
  auto e = t2.value(batch_norm(t2, t2.constant(xv), t2.constant(Tensor<double>::ones(Shape{3})),
                               t2.constant(Tensor<double>::zeros(Shape{3})), identity, BnMode::kEval));
  for (std::size_t i = 0; i < e.numel(); ++i) CHECK(e[i] == Approx(xv[i]).margin(1e-4));
}

TEST_CASE("pointwise ops") {
  Tape<double> tape;
  CHECK(tape.value(sigmoid(tape, tape.constant(Tensor<double>::zeros(Shape{3}))))[1] == 0.5);
  std::mt19937_64 rng(4);
  auto xv = oracle::random_tensor<double>(Shape{2, 3, 4, 4}, rng);
  auto x = tape.constant(xv);
  CHECK(tape.value(channel_scale(tape, x, tape.constant(Tensor<double>::ones(Shape{2, 3, 1, 1})))) == xv);
  for (double v : tape.value(subtract(tape, x, x)).data()) CHECK(v == 0.0);
  CHECK(tape.value(concat(tape, {x})) == xv);
  auto a = tape.constant(Tensor<double>(Shape{1, 8, 2, 2}));
  auto b = tape.constant(Tensor<double>(Shape{1, 16, 2, 2}));
  CHECK(tape.shape(concat(tape, {a, b}))[1] == 24);
  CHECK_THROWS_AS(concat(tape, {a, tape.constant(Tensor<double>(Shape{1, 8, 3, 2}))}), ShapeError);
  CHECK_THROWS_AS(channel_scale(tape, x, tape.constant(Tensor<double>(Shape{2, 2, 1, 1}))), ShapeError);
  auto tail = tape.constant(oracle::random_tensor<double>(Shape{2, 5, 4, 4}, rng));
  auto parts = split(tape, concat(tape, {x, tail}), {3, 5});
  CHECK(tape.value(parts[0]) == xv);
  CHECK(tape.value(parts[1]) == tape.value(tail));

  Tape<double> t2;
  auto p = t2.leaf(Tensor<double>(Shape{1, 2, 2}));
  auto q = t2.leaf(Tensor<double>(Shape{1, 3, 2}));
  t2.backward(sum(t2, concat(t2, {p, q})));
  for (double v : t2.grad(p).data()) CHECK(v == 1.0);
  for (double v : t2.grad(q).data()) CHECK(v == 1.0);
}

TEST_CASE("bce_loss values") {
  Tape<double> tape;
  auto half = tape.constant(Tensor<double>::full(Shape{1, 1, 4, 4}, 0.5));
  std::mt19937_64 rng(8);
  Tensor<double> t(Shape{1, 1, 4, 4});
  for (auto& v : t.data()) v = static_cast<double>(rng() % 2);
  CHECK(tape.value(bce_loss(tape, half, t))[0] == Approx(std::log(2.0)).margin(1e-12));
  auto ones = Tensor<double>::ones(Shape{1, 1, 4, 4});
  const double perfect = tape.value(bce_loss(tape, tape.constant(ones), ones))[0];
  CHECK(perfect == Approx(-std::log(1 - 1e-7)).epsilon(1e-6));
  CHECK(perfect > 0);

  auto pv = oracle::random_tensor<double>(Shape{4, 4}, rng, 0.01, 0.99);
  Tensor<double> tv(Shape{4, 4});
  for (auto& v : tv.data()) v = static_cast<double>(rng() % 2);
  double ref = 0;
  for (std::size_t i = 0; i < 16; ++i) ref -= tv[i] * std::log(pv[i]) + (1 - tv[i]) * std::log(1 - pv[i]);
  ref /= 16;
  CHECK(tape.value(bce_loss(tape, tape.constant(pv), tv))[0] == Approx(ref).margin(1e-6));
  CHECK_THROWS_AS(bce_loss(tape, tape.constant(pv), Tensor<double>::full(Shape{4, 4}, 0.5)), DataError);
}

TEST_CASE("backward: linear, quadratic, accumulation, errors") {
  Tape<double> tape;
  auto xv = seq(Shape{2, 3});
  auto x = tape.leaf(xv);
  auto l1 = sum(tape, x);
  tape.backward(l1);
  for (double v : tape.grad(x).data()) CHECK(v == 1.0);
  tape.backward(l1);
  for (double v : tape.grad(x).data()) CHECK(v == 2.0);

  Tape<double> t2;
  auto y = t2.leaf(xv);
  t2.backward(sum(t2, multiply(t2, y, y)));
  for (std::size_t i = 0; i < xv.numel(); ++i) CHECK(t2.grad(y)[i] == 2 * xv[i]);

  CHECK_THROWS_AS(t2.backward(y), ShapeError);
  Tape<double> other;
  auto z = other.leaf(Tensor<double>(Shape{1}));
  CHECK_THROWS(t2.backward(z));
}

TEST_CASE("Adam") {
  Param<double> w{"w", Tensor<double>(Shape{1}, {0.0}), {}};
  Adam<double> opt({&w}, AdamConfig{0.1});
  for (int s = 0; s < 200; ++s) {
    w.grad = Tensor<double>(Shape{1}, {2 * (w.value[0] - 3)});
    opt.step();
  }
  CHECK(std::abs(w.value[0] - 3) < 0.1);
  CHECK(opt.step_count() == 200);

  Param<double> p{"p", Tensor<double>(Shape{3}, {1, 2, 3}), {}};
  Adam<double> a2({&p});
  p.grad = Tensor<double>(Shape{3}, {0.5, -2, 0});
  a2.step();
  CHECK(p.value[0] == Approx(1 - 0.001).epsilon(1e-6));
  CHECK(p.value[1] == Approx(2 + 0.001).epsilon(1e-6));
  CHECK(p.value[2] == 3.0);

  Param<double> q{"q", Tensor<double>(Shape{1}, {1.0}), {}};
  Adam<double> a3({&q});
  CHECK_THROWS(a3.step());
}

TEST_CASE("gradient checks: every differentiable op, 20+ random cases each") {
  std::mt19937_64 rng(1234);
  for (auto& c : gradcheck::op_cases(rng)) {
    for (int trial = 0; trial < 20; ++trial) {
      auto [inputs, graph] = c.make();
      gradcheck::Checker checker(std::move(inputs), graph, rng());
      const auto r = checker.run(6);
      INFO(c.name << " trial " << trial << " max rel err " << r.max_rel);
      CHECK(r.ok());
    }
  }
}
