#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pcnet/eval.hpp"
#include "support/oracles.hpp"

using namespace pcnet;
using namespace pcnet::eval;
using Catch::Approx;

namespace {

struct Draw {
  std::vector<double> scores;
  std::vector<bool> labels;
};

// Scores on a coarse grid so that ties are common.
Draw random_draw(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution pos(0.3);
  Draw d;
  for (std::size_t i = 0; i < n; ++i) {
    d.scores.push_back(level(rng) / 9.0);
    d.labels.push_back(pos(rng));
  }
  d.labels[0] = true;
  d.labels[1] = false;
  return d;
}

Mask random_mask(std::mt19937_64& rng, const Shape& s, double p) {
  std::bernoulli_distribution b(p);
  Mask m(s);
  for (auto& v : m.data()) v = b(rng) ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> bytes(const Mask& m) { return {m.data().begin(), m.data().end()}; }

}  // namespace

TEST_CASE("AUC worked examples") {
  CHECK(roc_auc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) == 0.75);
  CHECK(roc_auc({0.1, 0.2, 0.3, 0.4}, {false, false, true, true}) == 1.0);
  CHECK(roc_auc({0.4, 0.3, 0.2, 0.1}, {false, false, true, true}) == 0.0);
  CHECK(roc_auc({0.5, 0.5, 0.5}, {true, false, false}) == 0.5);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {true, true}), DataError);
  CHECK_THROWS_AS(roc_auc({0.1}, {true, false}), ShapeError);
}

TEST_CASE("AUC matches pairwise counting") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_draw(rng, std::uniform_int_distribution<std::size_t>(2, 200)(rng));
    REQUIRE(roc_auc(d.scores, d.labels) == oracle::auc_pairs(d.scores, d.labels));
  }
}

TEST_CASE("AUC invariants") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = random_draw(rng, 150);
    const double a = roc_auc(d.scores, d.labels);
    std::vector<bool> flipped;
    for (bool l : d.labels) flipped.push_back(!l);
    CHECK(roc_auc(d.scores, flipped) == Approx(1.0 - a).margin(1e-12));
    std::vector<double> warped;
    for (double s : d.scores) warped.push_back(std::exp(3 * s) - 7);
    CHECK(roc_auc(warped, d.labels) == a);
  }
  Tensor<float> pred(Shape{1, 2, 2}, {0.1f, 0.9f, 0.8f, 0.2f});
  Tensor<std::uint8_t> truth(Shape{1, 2, 2}, {0, 1, 1, 0});
  CHECK(roc_auc(pred, truth) == 1.0);
}

TEST_CASE("threshold metrics") {
  Tensor<float> pred(Shape{1, 2, 4}, {0.9f, 0.6f, 0.5f, 0.2f, 0.1f, 0.7f, 0.3f, 0.4f});
  Tensor<std::uint8_t> truth(Shape{1, 2, 4}, {1, 1, 0, 1, 0, 0, 0, 0});
  auto r = threshold_metrics(pred, truth);
  CHECK(r.counts.tp == 2);
  CHECK(r.counts.fp == 2);
  CHECK(r.counts.fn == 1);
  CHECK(r.counts.tn == 3);
  CHECK(*r.acc == Approx(5.0 / 8));
  CHECK(*r.se == Approx(2.0 / 3));
  CHECK(*r.sp == Approx(3.0 / 5));
  CHECK(*r.dice == Approx(4.0 / 7));
  const double precision = 2.0 / 4;
  CHECK(*r.dice == Approx(2 * *r.se * precision / (*r.se + precision)));

  SECTION("empty classes leave ratios undefined") {
    Tensor<std::uint8_t> none(Shape{1, 2, 4});
    auto z = threshold_metrics(Tensor<float>(Shape{1, 2, 4}), none);
    CHECK(!z.se);
    CHECK(!z.dice);
    CHECK(*z.sp == 1.0);
    CHECK(*z.acc == 1.0);
  }
  CHECK_THROWS_AS(threshold_metrics(Tensor<float>(Shape{1, 2, 2}), truth), ShapeError);
  CHECK_THROWS_AS(threshold_metrics(Tensor<float>::full(Shape{1, 2, 4}, std::nanf("")), truth), DataError);
}

TEST_CASE("component filtering at the size boundary") {
  Mask m(Shape{1, 40, 60});
  // 39-voxel and 40-voxel strips, far apart
  for (std::size_t x = 0; x < 39; ++x) m.at(0, 5, x) = 1;
  for (std::size_t x = 0; x < 40; ++x) m.at(0, 30, 10 + x) = 1;
  auto out = remove_small_components(m);
  for (std::size_t x = 0; x < 39; ++x) CHECK(out.at(0, 5, x) == 0);
  for (std::size_t x = 0; x < 40; ++x) CHECK(out.at(0, 30, 10 + x) == 1);

  SECTION("diagonal contact joins components") {
    Mask d(Shape{1, 50, 50});
    for (std::size_t i = 0; i < 20; ++i) d.at(0, i, i) = 1;
    for (std::size_t i = 0; i < 20; ++i) d.at(0, 20 + i, 20 + i) = 1;
    std::vector<std::uint32_t> labels;
    CHECK(label_components(d, labels) == 1);
    CHECK(remove_small_components(d).data()[0] == 1);
  }
  SECTION("3D tube survives and a speck is removed") {
    Mask v(Shape{1, 20, 20, 20});
    for (std::size_t z = 0; z < 20; ++z)
      for (std::size_t y = 9; y < 11; ++y) v.at(0, z, y, 10) = 1;
    v.at(0, 2, 2, 2) = v.at(0, 3, 3, 3) = 1;
    auto f = remove_small_components(v);
    CHECK(f.at(0, 2, 2, 2) == 0);
    CHECK(f.at(0, 3, 3, 3) == 0);
    CHECK(f.at(0, 12, 10, 10) == 1);
    std::vector<std::uint32_t> labels;
    std::vector<std::size_t> sizes;
    CHECK(label_components(v, labels, &sizes) == 2);
    CHECK(sizes == std::vector<std::size_t>{40, 2});
  }
}

TEST_CASE("component filtering matches union-find and is idempotent") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const bool vol = trial % 2 == 1;
    const Shape s = vol ? Shape{1, 12, 16, 16} : Shape{1, 48, 48};
    auto m = random_mask(rng, s, vol ? 0.12 : 0.3);
    auto once = remove_small_components(m);
    auto twice = remove_small_components(once);
    REQUIRE(std::ranges::equal(once.data(), twice.data()));
    const auto expect = vol ? oracle::filter_components(bytes(m), 12, 16, 16, 40)
                            : oracle::filter_components(bytes(m), 1, 48, 48, 40);
    REQUIRE(bytes(once) == expect);
  }
}

TEST_CASE("region evaluation") {
  std::mt19937_64 rng(24);
  auto pred = oracle::random_tensor<float>(Shape{1, 8, 16, 16}, rng, 0, 1);
  auto truth = random_mask(rng, Shape{1, 8, 16, 16}, 0.2);
  auto all = evaluate_region(pred, truth);
  CHECK(all.region == "all");
  CHECK(all.counts.total() == pred.numel());

  SECTION("an all-ones region matches the whole image") {
    auto r = evaluate_region(pred, truth, Mask(pred.shape(), 1));
    CHECK(r.region == "subregion");
    CHECK(*r.auc == *all.auc);
    CHECK(*r.dice == *all.dice);
  }
  SECTION("a slab only counts its voxels") {
    Mask slab(pred.shape());
    for (std::size_t z = 2; z < 5; ++z)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) slab.at(0, z, y, x) = 1;
    auto r = evaluate_region(pred, truth, slab);
    CHECK(r.counts.total() == 3 * 256);
    std::vector<double> s;
    std::vector<bool> l;
    for (std::size_t i = 2 * 256; i < 5 * 256; ++i) {
      s.push_back(pred[i]);
      l.push_back(truth[i] == 1);
    }
    CHECK(*r.auc == oracle::auc_pairs(s, l));
  }
  SECTION("single-class truth leaves AUC undefined") {
    auto r = evaluate_region(pred, Mask(pred.shape()));
    CHECK(!r.auc);
    CHECK(!r.se);
  }
  CHECK_THROWS_AS(evaluate_region(pred, truth, Mask(pred.shape())), DataError);
  CHECK_THROWS_AS(evaluate_region(pred, truth, Mask(Shape{1, 8, 16, 15})), ShapeError);
}

TEST_CASE("report formatting") {
  EvalReport r;
  r.counts = {3, 1, 5, 1};
  r.derive_ratios();
  r.auc = 0.875;
  std::ostringstream os;
  write_text(os, r);
  CHECK(os.str() ==
        "region = all\nauc = 0.875\nacc = 0.8\nsp = 0.8333333333333334\nse = 0.75\ndice = 0.75\n"
        "tp = 3\nfp = 1\ntn = 5\nfn = 1\n");
  CHECK(csv_row("case000", r) == "case000,all,0.875,0.8,0.8333333333333334,0.75,0.75,3,1,5,1");
  CHECK(format_value(std::nullopt) == "undefined");
  for (double v : {0.1, 1.0 / 3, 0.98765432101234}) CHECK(*parse_value(format_value(v)) == v);
  CHECK(!parse_value("undefined"));
  CHECK_THROWS_AS(parse_value("0.5x"), DataError);

  SECTION("means skip undefined fields and sum counts") {
    EvalReport u;
    u.counts = {0, 0, 10, 0};
    u.derive_ratios();
    auto m = mean_report({r, u});
    CHECK(*m.auc == 0.875);
    CHECK(*m.se == 0.75);
    CHECK(*m.acc == Approx(0.9));
    CHECK(m.counts.tn == 15);
  }
}
