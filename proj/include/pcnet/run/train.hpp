#pragma once

#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>

#include "pcnet/data.hpp"
#include "pcnet/engine.hpp"
#include "pcnet/eval.hpp"
#include "pcnet/model.hpp"
#include "pcnet/run/config.hpp"

namespace pcnet::run {

struct TrainOptions {
  model::LossConfig loss;
  AdamConfig adam;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  bool augment = true;
  std::uint64_t seed = 0;
};

inline TrainOptions train_options(const RunConfig& c) {
  TrainOptions o;
  o.loss = {c.lambda2, c.lambda3};
  o.adam.learning_rate = c.learning_rate;
  o.batch_size = c.effective_batch_size();
  o.epochs = c.epochs;
  o.augment = c.augment && c.spatial_rank == 2;
  o.seed = c.seed;
  return o;
}

struct StepLog {
  std::size_t step = 0;
  double main = 0, aux2 = 0, aux3 = 0, total = 0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(std::size_t epoch)> on_epoch;  // 1-based, after the epoch's last step
};

inline constexpr const char* kLossCsvHeader = "step,main,aux2,aux3,total";

inline std::string loss_csv_row(const StepLog& s) {
  auto f = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  return std::to_string(s.step) + ',' + f(s.main) + ',' + f(s.aux2) + ',' + f(s.aux3) + ',' + f(s.total);
}

/// Builds a training batch; in 2D each patch/label pair gets an independent
/// random rotation or flip when `rng` is given.
template <Real T>
std::pair<Tensor<T>, Tensor<T>> training_batch(const data::SampleSet& set, const std::vector<std::size_t>& indices,
                                               std::mt19937_64* rng) {
  if (!rng) return data::make_batch<T>(set, indices);
  data::SampleSet view{set.patch_extent, {}};
  view.samples.reserve(indices.size());
  std::vector<std::size_t> local(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = set.samples.at(indices[k]);
    const auto op = data::kAugmentOps[std::uniform_int_distribution<std::size_t>(0, data::kAugmentOps.size() - 1)(*rng)];
    view.samples.push_back({data::apply_augment(s.patch, op), data::apply_augment(s.label, op), s.origin});
    local[k] = k;
  }
  return data::make_batch<T>(view, local);
}

/// Mini-batch Adam over shuffled samples. Throws NumericError on a
/// non-finite loss before the offending update is applied.
template <Real T>
std::vector<StepLog> train_model(model::ModelGraph<T>& m, const data::SampleSet& set, const TrainOptions& opt,
                                 const TrainHooks& hooks = {}) {
  if (set.empty()) throw DataError("train: no training samples");
  if (opt.batch_size == 0) throw ConfigError("config field 'batch_size': must be positive");
  const auto loss_cfg = model::effective_loss(m.spec().variant, opt.loss);
  loss_cfg.validate();
  Adam<T> adam(m.parameters(), opt.adam);
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<StepLog> log;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + opt.batch_size)));
      auto [x, y] = training_batch<T>(set, idx, opt.augment ? &rng : nullptr);
      Tape<T> tape;
      const auto out = m.forward(tape, tape.constant(std::move(x)), BnMode::kTrain);
      const auto targets = model::multiscale_targets(y);
      const auto terms = model::total_loss(tape, out, targets, loss_cfg);
      StepLog s{++step, tape.value(terms.main)[0], tape.value(terms.aux2)[0], tape.value(terms.aux3)[0],
                tape.value(terms.total)[0]};
      if (!std::isfinite(s.total))
        throw NumericError("train: non-finite loss at step " + std::to_string(s.step));
      tape.backward(terms.total);
      adam.step();
      adam.zero_grad();
      log.push_back(s);
      if (hooks.on_step) hooks.on_step(s);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch);
  }
  return log;
}

/// Main-head probabilities for every sample, in eval mode.
template <Real T>
std::pair<Tensor<T>, Tensor<std::uint8_t>> predict_samples(const model::ModelGraph<T>& m, const data::SampleSet& set,
                                                          std::size_t batch = 64) {
  if (set.empty()) throw DataError("predict: no samples");
  std::vector<std::size_t> dims{set.size(), 1};
  dims.insert(dims.end(), set.patch_extent.begin(), set.patch_extent.end());
  Tensor<T> probs{Shape(dims)};
  Tensor<std::uint8_t> labels{Shape(dims)};
  const std::size_t n = probs.numel() / set.size();
  for (std::size_t start = 0; start < set.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, set.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto [x, y] = data::make_batch<T>(set, idx);
    Tape<T> tape(TapeMode::kNoGrad);
    const auto out = m.forward(tape, tape.constant(std::move(x)), BnMode::kEval);
    std::copy_n(tape.value(out.main).raw(), idx.size() * n, probs.raw() + start * n);
    for (std::size_t i = 0; i < idx.size() * n; ++i) labels[start * n + i] = static_cast<std::uint8_t>(y[i]);
  }
  return {std::move(probs), std::move(labels)};
}

/// Pooled report over all pixels of a held-out sample set.
template <Real T>
eval::EvalReport evaluate_samples(const model::ModelGraph<T>& m, const data::SampleSet& set, double threshold = 0.5,
                                  std::size_t batch = 64) {
  const auto [probs, labels] = predict_samples(m, set, batch);
  return eval::evaluate_region(probs, labels, std::nullopt, threshold);
}

/// Image-level split: the last round(n * fraction) records are held out.
inline std::pair<std::vector<data::ImageRecord>, std::vector<data::ImageRecord>> split_records(
    std::vector<data::ImageRecord> records, double holdout_fraction) {
  const auto n_hold = static_cast<std::size_t>(std::lround(static_cast<double>(records.size()) * holdout_fraction));
  std::vector<data::ImageRecord> held(std::make_move_iterator(records.end() - static_cast<std::ptrdiff_t>(n_hold)),
                                      std::make_move_iterator(records.end()));
  records.resize(records.size() - n_hold);
  return {std::move(records), std::move(held)};
}

inline void preprocess_records(std::vector<data::ImageRecord>& records, const RunConfig& c) {
  if (c.preprocess != "fundus") return;
  data::ClaheOptions clahe;
  for (auto& r : records) {
    if (r.spatial_rank() != 2) throw DataError("preprocess: fundus preprocessing needs 2D records");
    r.pixels = data::preprocess_fundus(r.pixels, clahe, c.gamma);
  }
}

/// Training and held-out patch sets. In 2D, patch_count patches are split
/// (1 - f) : f between training and held-out images; in 3D every scan gets
/// the stratified vessel/background draw.
struct Datasets {
  data::SampleSet train, holdout;
};

inline Datasets build_datasets(const std::vector<data::ImageRecord>& records, const RunConfig& c) {
  if (records.empty()) throw DataError("train: dataset is empty");
  auto [train_records, held_records] = split_records(records, c.holdout_fraction);
  if (train_records.empty()) throw DataError("train: holdout_fraction leaves no training records");
  Datasets d;
  if (c.spatial_rank == 2) {
    const auto n_hold = held_records.empty()
                            ? 0
                            : static_cast<std::size_t>(std::lround(static_cast<double>(c.patch_count) * c.holdout_fraction));
    d.train = data::sample_patches_2d(train_records, c.patch_count - n_hold, c.patch, c.seed);
    if (n_hold) d.holdout = data::sample_patches_2d(held_records, n_hold, c.patch, c.seed + 1);
  } else {
    const data::StratifiedCounts counts{c.vessel_per_scan, c.background_per_scan};
    d.train = data::sample_patches_3d(train_records, counts, c.patch, c.seed);
    if (!held_records.empty()) d.holdout = data::sample_patches_3d(held_records, counts, c.patch, c.seed + 1);
  }
  return d;
}

}  // namespace pcnet::run
