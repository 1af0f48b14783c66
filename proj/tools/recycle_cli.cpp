#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "recycle/recycle.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool no_residual = false;
  std::optional<std::string> out;
  std::optional<std::string> anchor;
  std::optional<std::string> checkpoint;
  std::optional<std::string> kind;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for model initialization, shuffling, dropout and generators");
  cmd->add_flag("--deterministic", o.deterministic, "Require bitwise-reproducible outputs");
  cmd->add_flag("--no-residual", o.no_residual, "Train on raw rows with zero profiles (ablation)");
  cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-compressed residual forecasting toolkit"};
  app.require_subcommand(1);
  Options o;

  const std::map<std::string, std::string> descriptions = {
      {"prepare", "Preprocess the dataset and write frames, profiles, residuals and split manifests"},
      {"train", "Train a model and write checkpoint, metrics, epoch history and timing"},
      {"predict", "Forecast F cycles from an anchor date with a checkpoint"},
      {"evaluate", "Score a checkpoint on the validation and test splits"},
      {"baseline", "Score the profile or persistence baseline on the test split"},
      {"diagnose", "Run the scalar-token attention breakdown experiment"},
      {"bench", "Time prepare, train and evaluate three times, with and without residual learning"},
      {"synth", "Write a synthetic series to dataset.path"},
  };
  std::map<std::string, CLI::App*> commands;
  for (const auto& [name, text] : descriptions) {
    CLI::App* cmd = app.add_subcommand(name, text);
    add_common(cmd, o);
    commands[name] = cmd;
  }
  commands["predict"]->add_option("--anchor", o.anchor, "First forecast date, YYYY-MM-DD");
  for (const char* name : {"predict", "evaluate"}) {
    commands[name]->add_option("--checkpoint", o.checkpoint, "Checkpoint (default OUT/model.ckpt.json)");
  }
  commands["baseline"]->add_option("--kind", o.kind, "rhp or persistence")->check(CLI::IsMember({"rhp", "persistence"}));

  CLI11_PARSE(app, argc, argv);

  try {
    recycle::RunConfig cfg = recycle::load_run_config(o.config);
    recycle::Overrides ov;
    ov.seed = o.seed;
    ov.deterministic = o.deterministic;
    ov.no_residual = o.no_residual;
    if (o.out) ov.out = *o.out;
    ov.anchor_date = o.anchor;
    if (o.checkpoint) ov.checkpoint = *o.checkpoint;
    ov.baseline_kind = o.kind;
    recycle::apply(cfg, ov);

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "prepare") recycle::cmd_prepare(cfg);
    else if (name == "train") recycle::cmd_train(cfg);
    else if (name == "predict") recycle::cmd_predict(cfg);
    else if (name == "evaluate") recycle::cmd_evaluate(cfg);
    else if (name == "baseline") recycle::cmd_baseline(cfg);
    else if (name == "diagnose") recycle::cmd_diagnose(cfg);
    else if (name == "bench") recycle::cmd_bench(cfg);
    else if (name == "synth") recycle::cmd_synth(cfg);
  } catch (const recycle::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
