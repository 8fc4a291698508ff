#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flightpatch/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> lookback;
  std::optional<std::size_t> horizon;
  std::optional<std::string> patches;
  std::optional<bool> diff;
  std::optional<std::string> split;
  std::optional<std::string> baseline;
  bool coded_space = false;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> n;
  std::optional<std::string> profile;
  std::optional<std::string> windows;
  std::vector<std::string> assignments;
};

flightpatch::RunConfig resolve(const Flags& f) {
  flightpatch::RunConfig rc;
  if (!f.config.empty()) rc.load_file(f.config);
  for (const auto& a : f.assignments) rc.set_assignment(a);
  if (f.seed) rc.seed = *f.seed;
  if (f.lookback) rc.model.lookback = *f.lookback;
  if (f.horizon) rc.model.horizon = *f.horizon;
  if (f.patches) rc.set("patch_sizes", *f.patches);
  if (f.diff) rc.diff = *f.diff;
  if (f.split) rc.set("split", *f.split);
  if (f.baseline) rc.baseline = *f.baseline;
  if (f.coded_space) rc.coded_space = true;
  if (f.out) rc.out = *f.out;
  if (f.input) rc.input = *f.input;
  if (f.data) rc.data = *f.data;
  if (f.checkpoint) rc.checkpoint = *f.checkpoint;
  if (f.n) rc.n = *f.n;
  if (f.profile) rc.profile = *f.profile;
  if (f.windows) rc.windows = *f.windows;
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FlightPatchNet trajectory prediction"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "flat key=value config file");
  app.add_option("--set", f.assignments, "override any config key (key=value), repeatable");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--lookback", f.lookback, "lookback window L");
  app.add_option("--horizon", f.horizon, "prediction horizon T");
  app.add_option("--patches", f.patches, "comma-separated patch sizes, e.g. 30,20,10,6,2");
  app.add_flag_function("--diff,!--no-diff", [&](std::int64_t count) { f.diff = count > 0; },
                        "enable/disable differential coding");
  app.add_option("--split", f.split, "split mode")->check(CLI::IsMember({"chrono", "random"}));
  app.add_option("--baseline", f.baseline, "also evaluate a baseline")->check(CLI::IsMember({"persistence"}));
  app.add_flag("--coded-space", f.coded_space, "evaluate in the coded target space");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--input", f.input, "input CSV");
  app.add_option("--data", f.data, "dataset directory");
  app.add_option("--checkpoint", f.checkpoint, "checkpoint file");
  app.add_option("--n", f.n, "number of synthetic trajectories");
  app.add_option("--profile", f.profile, "synthetic motion profile")->check(CLI::IsMember({"straight", "curved"}));
  app.add_option("--windows", f.windows, "test window indices for export-plot, e.g. 0,5");

  auto* preprocess = app.add_subcommand("preprocess", "ADS-B CSV -> dataset files + manifest");
  auto* synth = app.add_subcommand("synth", "synthetic trajectories -> dataset files + manifest");
  auto* train = app.add_subcommand("train", "train a model, write checkpoint + loss history");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* predict = app.add_subcommand("predict", "predict T points from L+1 observed points");
  auto* plot = app.add_subcommand("export-plot", "plot-ready truth/prediction series");

  CLI11_PARSE(app, argc, argv);

  try {
    const flightpatch::RunConfig rc = resolve(f);
    if (preprocess->parsed()) flightpatch::cmd_preprocess(rc, std::cout);
    else if (synth->parsed()) flightpatch::cmd_synth(rc, std::cout);
    else if (train->parsed()) flightpatch::cmd_train(rc, std::cout);
    else if (eval->parsed()) flightpatch::cmd_eval(rc, std::cout);
    else if (predict->parsed()) flightpatch::cmd_predict(rc, std::cout);
    else if (plot->parsed()) flightpatch::cmd_export_plot(rc, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
