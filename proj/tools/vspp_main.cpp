// SPDX-License-Identifier: Apache-2.0
//
// vspp: command-line front end for pretraining, finetuning and evaluation.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vspp/commands.hpp"
#include "vspp/error.hpp"

namespace {

struct Common {
  std::string config;
  std::string checkpoint;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  bool resume = false;
  std::optional<int> stop_after;
};

void add_common(CLI::App* cmd, Common& c, bool with_checkpoint) {
  cmd->add_option("--config", c.config, "YAML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--profile", c.profile, "desk or paper defaults")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out-dir", c.out_dir, "parent of the run directory")->capture_default_str();
  if (with_checkpoint) cmd->add_option("--checkpoint", c.checkpoint, "input checkpoint");
  cmd->add_flag("--resume", c.resume, "continue from the newest checkpoint in the run directory");
  cmd->add_option("--stop-after-epoch", c.stop_after, "stop once this epoch is written");
}

vspp::commands::RunOptions run_options(const Common& c) {
  vspp::commands::RunOptions o;
  o.out_dir = c.out_dir;
  o.checkpoint = c.checkpoint;
  o.resume = c.resume;
  o.stop_after_epoch = c.stop_after;
  o.log = &std::cerr;
  return o;
}

void report(const vspp::commands::RunResult& r) {
  std::cout << "run_dir: " << r.run_dir.string() << "\n";
  if (!r.checkpoint.empty()) std::cout << "checkpoint: " << r.checkpoint.string() << "\n";
  if (!r.metrics.empty()) std::cout << "metrics: " << r.metrics.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage self-supervised video pretraining (distillation, then segment-pace prediction)"};
  app.require_subcommand(1);

  Common aux, vspp, fine, evalc;
  auto* c_aux = app.add_subcommand("pretrain-aux", "momentum teacher/student distillation stage");
  add_common(c_aux, aux, false);
  auto* c_vspp = app.add_subcommand("pretrain-vspp", "segment-pace prediction stage (optionally from a stage-1 checkpoint)");
  add_common(c_vspp, vspp, true);
  auto* c_fine = app.add_subcommand("finetune", "supervised finetuning on the labelled train split");
  add_common(c_fine, fine, true);
  auto* c_eval = app.add_subcommand("evaluate", "10-clip evaluation of a finetuned checkpoint");
  add_common(c_eval, evalc, true);

  vspp::commands::InspectRequest inspect;
  auto* c_inspect = app.add_subcommand("inspect-sample", "print the frame indices of one sampling plan");
  c_inspect->add_option("--frames,-N", inspect.frames, "source frame count")->capture_default_str();
  c_inspect->add_option("--clip-len,-K", inspect.clip_len, "clip length")->capture_default_str();
  c_inspect->add_option("--segments,-Z", inspect.segments, "segment count")->capture_default_str();
  c_inspect->add_option("--max-speed,-Q", inspect.max_speed, "largest speed rate")->capture_default_str();
  c_inspect->add_option("--speed", inspect.speed, "speed rate of the altered segment")->capture_default_str();
  c_inspect->add_option("--segment", inspect.segment, "1-based altered segment")->capture_default_str();
  c_inspect->add_option("--offset", inspect.offset, "start frame")->capture_default_str();

  std::vector<std::string> plot_files, plot_labels;
  std::string plot_out = "plots";
  auto* c_plot = app.add_subcommand("plot", "SVG curves from one or more metrics files (overlaid)");
  c_plot->add_option("files", plot_files, "metrics CSV files")->required()->check(CLI::ExistingFile);
  c_plot->add_option("--label", plot_labels, "legend label per file");
  c_plot->add_option("--out-dir", plot_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  using namespace vspp::commands;
  try {
    auto cfg_of = [](const Common& c) { return resolve_config(c.config, c.profile, c.seed); };
    if (c_aux->parsed()) report(pretrain_aux(cfg_of(aux), run_options(aux)));
    else if (c_vspp->parsed()) report(pretrain_vspp(cfg_of(vspp), run_options(vspp)));
    else if (c_fine->parsed()) {
      const auto r = finetune(cfg_of(fine), run_options(fine));
      report(r);
      std::cout << "val_top1: " << r.top1 << "\n";
    } else if (c_eval->parsed()) {
      const auto r = evaluate(cfg_of(evalc), run_options(evalc));
      report(r);
      std::cout << "test_top1: " << r.top1 << "\n";
    } else if (c_inspect->parsed()) {
      std::cout << inspect_sample(inspect) << "\n";
    } else if (c_plot->parsed()) {
      for (const auto& p : plot(std::vector<std::filesystem::path>(plot_files.begin(), plot_files.end()), plot_labels,
                                plot_out))
        std::cout << p.string() << "\n";
    }
  } catch (const vspp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == vspp::Errc::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
