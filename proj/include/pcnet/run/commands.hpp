#pragma once

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>

#include "pcnet/run/train.hpp"

namespace pcnet::run {

namespace fs = std::filesystem;

struct CommandOptions {
  std::optional<std::string> region;  // PCTN mask, or a .tsv manifest of per-case masks
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string case_id(std::size_t i) {
  std::ostringstream os;
  os << "case" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

inline data::SynthOptions synth_options(const RunConfig& c, std::size_t index) {
  const std::uint64_t seed = c.seed * 1000003 + index;
  if (c.spatial_rank == 3) {
    auto o = data::SynthOptions::volume(seed);
    o.noise_sigma = c.synth_noise;
    return o;
  }
  data::SynthOptions o;
  o.extent = {c.synth_extent, c.synth_extent};
  o.n_trees = c.synth_trees;
  o.n_branches = c.synth_branches;
  o.noise_sigma = c.synth_noise;
  o.seed = seed;
  return o;
}

/// Generates synth_count records plus a manifest in out_dir.
inline int cmd_synth(const RunConfig& c, std::ostream& out) {
  const fs::path dir = c.out_dir;
  ensure_dir(dir);
  std::vector<data::ManifestEntry> entries;
  double fg_sum = 0;
  for (std::size_t i = 0; i < c.synth_count; ++i) {
    auto r = data::synth_vessels(synth_options(c, i));
    r.id = case_id(i);
    data::ManifestEntry e{r.id, r.id + ".pixels.pctn", r.id + ".mask.pctn"};
    io::save(dir / e.pixels, r.pixels);
    io::save(dir / e.mask, *r.mask);
    const double fg = data::foreground_fraction(r);
    fg_sum += fg;
    out << r.id << " foreground " << std::fixed << std::setprecision(3) << 100 * fg << "%\n";
    entries.push_back(std::move(e));
  }
  data::write_manifest(dir / "manifest.tsv", entries);
  if (!entries.empty())
    out << "mean foreground " << std::fixed << std::setprecision(3) << 100 * fg_sum / entries.size() << "%\n";
  out << "wrote " << entries.size() << " records to " << (dir / "manifest.tsv").string() << "\n";
  return 0;
}

inline std::vector<data::ImageRecord> load_checked(const RunConfig& c) {
  auto records = data::load_dataset(c.data_manifest);
  for (const auto& r : records) {
    if (r.spatial_rank() != c.spatial_rank)
      throw DataError("record '" + r.id + "' has " + std::to_string(r.spatial_rank()) +
                      " spatial axes but spatial_rank is " + std::to_string(c.spatial_rank));
    if (!r.mask) throw DataError("record '" + r.id + "' has no mask");
  }
  preprocess_records(records, c);
  return records;
}

/// Trains on the manifest's training split; logs every step and writes a
/// checkpoint after each epoch.
inline int cmd_train(const RunConfig& c, std::ostream& out) {
  const auto records = load_checked(c);
  const auto sets = build_datasets(records, c);
  model::ModelGraph<float> m(c.model_spec());
  const fs::path dir = c.out_dir;
  ensure_dir(dir);
  {
    std::ofstream cfg_out(dir / "config.conf");
    write_config(cfg_out, c);
  }
  std::ofstream log(dir / "loss.csv");
  if (!log) throw DataError("cannot open for writing: " + (dir / "loss.csv").string());
  log << kLossCsvHeader << '\n';
  const auto opt = train_options(c);
  out << model::variant_name(c.variant) << ": " << m.parameter_count() << " parameters, " << sets.train.size()
      << " training patches, batch " << opt.batch_size << ", " << opt.epochs << " epochs\n";
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) { log << loss_csv_row(s) << '\n'; };
  hooks.on_epoch = [&](std::size_t epoch) {
    log.flush();
    model::save_checkpoint(dir / ("checkpoint_epoch" + std::to_string(epoch) + ".pcnet"), m);
    out << "epoch " << epoch << " done\n";
  };
  const auto steps = train_model(m, sets.train, opt, hooks);
  const fs::path ckpt = c.checkpoint;
  if (ckpt.has_parent_path()) ensure_dir(ckpt.parent_path());
  model::save_checkpoint(ckpt, m);
  if (!steps.empty())
    out << "loss " << steps.front().total << " -> " << steps.back().total << " over " << steps.size() << " steps\n";
  if (!sets.holdout.empty()) {
    const auto r = evaluate_samples(m, sets.holdout, c.threshold, opt.batch_size);
    out << "held-out patches: " << sets.holdout.size() << "\n";
    eval::write_text(out, r);
  }
  out << "checkpoint " << ckpt.string() << "\n";
  return 0;
}

inline Tensor<float> read_image(const fs::path& p) {
  if (p.extension() == ".pgm") return data::read_pgm(p);
  return io::load_as<float>(p);
}

/// Probability map and binary mask for one image.
inline std::pair<Tensor<float>, eval::Mask> predict_image(const model::ModelGraph<float>& m, const Tensor<float>& image,
                                                         const RunConfig& c) {
  model::StitchOptions so{c.patch, c.stride, c.spatial_rank == 3 ? std::size_t{4} : std::size_t{16}};
  auto prob = model::predict_full(m, image, so);
  eval::Mask mask(prob.shape(), 0);
  for (std::size_t i = 0; i < prob.numel(); ++i) mask[i] = prob[i] >= c.threshold;
  if (c.postfilter_enabled()) mask = eval::remove_small_components(mask, c.min_component_size);
  return {std::move(prob), std::move(mask)};
}

/// Predicts `input` when set, otherwise the held-out split of the manifest.
/// Writes <id>.prob.pctn / <id>.pred.pctn and predictions.tsv to out_dir.
inline int cmd_predict(const RunConfig& c, std::ostream& out) {
  auto m = model::load_checkpoint<float>(fs::path(c.checkpoint));
  const auto& s = m.spec();
  if (s.variant != c.variant || s.spatial_rank != c.spatial_rank)
    throw ConfigError("checkpoint holds a " + std::to_string(s.spatial_rank) + "D " +
                      std::string(model::variant_name(s.variant)) + " but the config asks for a " +
                      std::to_string(c.spatial_rank) + "D " + std::string(model::variant_name(c.variant)));
  std::vector<std::pair<std::string, Tensor<float>>> images;
  if (!c.input.empty()) {
    images.emplace_back(fs::path(c.input).stem().string(), read_image(c.input));
    std::vector<data::ImageRecord> one(1);
    one[0].id = images[0].first;
    one[0].pixels = images[0].second;
    preprocess_records(one, c);
    images[0].second = std::move(one[0].pixels);
  } else {
    auto [train, held] = split_records(load_checked(c), c.holdout_fraction);
    if (held.empty()) held = std::move(train);
    for (auto& r : held) images.emplace_back(r.id, std::move(r.pixels));
  }
  const fs::path dir = c.out_dir;
  ensure_dir(dir);
  std::vector<data::ManifestEntry> entries;
  for (const auto& [id, image] : images) {
    if (image.rank() != c.spatial_rank + 1) throw DataError("image '" + id + "' has the wrong rank");
    auto [prob, mask] = predict_image(m, image, c);
    data::ManifestEntry e{id, id + ".prob.pctn", id + ".pred.pctn"};
    io::save(dir / e.pixels, prob);
    io::save(dir / e.mask, mask);
    std::size_t fg = 0;
    for (auto v : mask.data()) fg += v;
    out << id << ": " << fg << " foreground voxels\n";
    entries.push_back(std::move(e));
  }
  data::write_manifest(dir / "predictions.tsv", entries);
  out << "wrote " << entries.size() << " predictions to " << (dir / "predictions.tsv").string() << "\n";
  return 0;
}

/// Compares predictions.tsv (probabilities and binary masks) against the
/// data manifest. AUC uses the probabilities, threshold metrics the masks.
inline int cmd_evaluate(const RunConfig& c, const CommandOptions& opt, std::ostream& out) {
  std::map<std::string, data::ManifestEntry> truth;
  for (auto& e : data::read_manifest(c.data_manifest)) truth[e.id] = e;
  const auto preds = data::read_manifest(c.predictions);

  std::optional<eval::Mask> shared_region;
  std::map<std::string, fs::path> region_paths;
  if (opt.region) {
    const fs::path rp = *opt.region;
    if (rp.extension() == ".tsv") {
      for (const auto& e : data::read_manifest(rp)) region_paths[e.id] = e.pixels;
    } else {
      shared_region = io::load_as<std::uint8_t>(rp);
    }
  }

  std::vector<std::pair<std::string, eval::EvalReport>> rows;
  std::vector<eval::EvalReport> all, sub;
  auto evaluate = [&](const Tensor<float>& prob, const eval::Mask& pred, const eval::Mask& gt,
                      const std::optional<eval::Mask>& region) {
    auto r = eval::evaluate_region(prob, gt, region, c.threshold);
    r.counts = eval::evaluate_region(pred, gt, region, 0.5).counts;
    r.derive_ratios();
    return r;
  };
  for (const auto& p : preds) {
    auto it = truth.find(p.id);
    if (it == truth.end() || it->second.mask.empty())
      throw DataError("prediction '" + p.id + "' has no ground truth in " + c.data_manifest);
    const auto prob = io::load_as<float>(p.pixels);
    const auto gt = io::load_as<std::uint8_t>(it->second.mask);
    eval::Mask pred(prob.shape(), 0);
    if (!p.mask.empty()) {
      pred = io::load_as<std::uint8_t>(p.mask);
    } else {
      for (std::size_t i = 0; i < prob.numel(); ++i) pred[i] = prob[i] >= c.threshold;
    }
    auto r = evaluate(prob, pred, gt, std::nullopt);
    rows.emplace_back(p.id, r);
    all.push_back(r);
    if (opt.region) {
      std::optional<eval::Mask> region = shared_region;
      if (!shared_region) {
        auto rit = region_paths.find(p.id);
        if (rit == region_paths.end()) throw DataError("no region mask for '" + p.id + "'");
        region = io::load_as<std::uint8_t>(rit->second);
      }
      auto rs = evaluate(prob, pred, gt, region);
      rows.emplace_back(p.id, rs);
      sub.push_back(rs);
    }
  }

  const fs::path dir = c.out_dir;
  ensure_dir(dir);
  std::ofstream csv(dir / "report.csv");
  if (!csv) throw DataError("cannot open for writing: " + (dir / "report.csv").string());
  csv << eval::kCsvHeader << '\n';
  for (const auto& [id, r] : rows) csv << eval::csv_row(id, r) << '\n';
  if (!all.empty()) csv << eval::csv_row("mean", eval::mean_report(all)) << '\n';
  if (!sub.empty()) csv << eval::csv_row("mean", eval::mean_report(sub)) << '\n';

  out << "cases = " << preds.size() << '\n';
  if (!all.empty()) eval::write_text(out, eval::mean_report(all));
  if (!sub.empty()) {
    out << '\n';
    eval::write_text(out, eval::mean_report(sub));
  }
  out << "wrote " << (dir / "report.csv").string() << '\n';
  return 0;
}

inline constexpr const char* kComplexityHeader = "variant,params,flops";

/// Parameter and FLOP counts of every ladder variant at the config's rank and width.
inline int cmd_count(const RunConfig& c, std::ostream& out, const std::optional<fs::path>& csv_path = std::nullopt) {
  std::ostringstream table;
  table << kComplexityHeader << '\n';
  for (auto v : model::kAllVariants) {
    model::ModelGraph<float> m(model::ModelSpec{v, c.spatial_rank, c.base_channels, c.levels, c.seed});
    const auto rep = model::count_complexity(m, std::vector<std::size_t>(c.spatial_rank, c.patch));
    table << model::variant_name(v) << ',' << rep.parameter_count << ',' << rep.flops << '\n';
  }
  out << table.str();
  if (csv_path) {
    if (csv_path->has_parent_path()) ensure_dir(csv_path->parent_path());
    std::ofstream os(*csv_path);
    if (!os) throw DataError("cannot open for writing: " + csv_path->string());
    os << table.str();
  }
  return 0;
}

}  // namespace pcnet::run
