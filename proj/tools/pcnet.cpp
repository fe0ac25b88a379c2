// pcnet: synth | train | predict | evaluate | count
//
// Exit codes: 0 success, 1 usage or config error, 2 data error,
// 3 numeric failure.

#include <iostream>

#include "CLI11.hpp"
#include "pcnet/run/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool no_postfilter = false;
  std::optional<std::string> region;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "run configuration file (key = value)")->required();
  sub->add_option("--seed", f.seed, "override the config seed");
  sub->add_option("--out", f.out, "override the output directory");
  sub->add_flag("--no-postfilter", f.no_postfilter, "skip small-component removal");
  sub->add_option("--region", f.region, "region mask (PCTN) or per-case manifest (.tsv) for evaluate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vessel segmentation toolkit"};
  app.require_subcommand(1);
  Flags flags;
  const char* names[] = {"synth", "train", "predict", "evaluate", "count"};
  const char* help[] = {"generate a synthetic dataset", "train a model", "predict probability maps and masks",
                        "evaluate predictions", "parameter and FLOP counts for every variant"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < 5; ++i) {
    subs.push_back(app.add_subcommand(names[i], help[i]));
    add_flags(subs.back(), flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto cfg = pcnet::run::load_config(flags.config);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out) cfg.out_dir = *flags.out;
    if (flags.no_postfilter) cfg.postfilter = pcnet::run::Postfilter::kOff;
    cfg.validate();
    pcnet::run::CommandOptions opt{flags.region};
    if (subs[0]->parsed()) return pcnet::run::cmd_synth(cfg, std::cout);
    if (subs[1]->parsed()) return pcnet::run::cmd_train(cfg, std::cout);
    if (subs[2]->parsed()) return pcnet::run::cmd_predict(cfg, std::cout);
    if (subs[3]->parsed()) return pcnet::run::cmd_evaluate(cfg, opt, std::cout);
    std::optional<std::filesystem::path> csv;
    if (flags.out) csv = std::filesystem::path(cfg.out_dir) / "complexity.csv";
    return pcnet::run::cmd_count(cfg, std::cout, csv);
  } catch (const pcnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const pcnet::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
