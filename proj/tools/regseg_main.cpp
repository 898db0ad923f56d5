#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "regseg/commands.hpp"
#include "regseg/errors.hpp"

namespace {

struct Flags {
  std::string size;
  std::string exclude;
  std::string report = "text";
  bool exclude_set = false;
};

void add_common(CLI::App* cmd, regseg::RunConfig& cfg, Flags& flags) {
  cmd->add_option("--preset", cfg.preset, "Named architecture preset")->capture_default_str();
  cmd->add_option("--preset-file", cfg.preset_file, "Preset file (key = value lines)");
  cmd->add_option("--schedule", cfg.schedule, "Dilation schedule, e.g. \"(1,1)+(1,2)+4*(1,4)+7*(1,14)\"");
  cmd->add_option("--classes", cfg.classes, "Number of classes");
  cmd->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str();
  cmd->add_option("--report", flags.report, "Report format: text or csv")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace regseg;
  CLI::App app{"RegSeg inference engine and analysis tools"};
  app.require_subcommand(1);
  RunConfig cfg;
  Flags flags;

  auto* describe = app.add_subcommand("describe", "Layer table, params, MACs and field-of-view");
  add_common(describe, cfg, flags);
  describe->add_option("--size", flags.size, "Input size HxW for the MAC count");

  auto* fov = app.add_subcommand("fov", "Per-layer field-of-view analysis");
  add_common(fov, cfg, flags);
  fov->add_option("--size", flags.size, "Image size HxW for the coverage footer");

  auto* infer = app.add_subcommand("infer", "Segment images");
  add_common(infer, cfg, flags);
  infer->add_option("--weights", cfg.weights, "Weight container")->required();
  infer->add_option("--input", cfg.input, "Image file or directory")->required();
  infer->add_option("--output", cfg.output, "Label PNG, or directory in batch mode")->required();
  infer->add_flag("--color", cfg.color, "Also write colourised PNGs");
  infer->add_option("--palette", cfg.palette, "Palette file with 'class_id R G B' lines");

  auto* eval = app.add_subcommand("eval", "Score predictions against labels");
  add_common(eval, cfg, flags);
  eval->add_option("--input", cfg.input, "Prediction file or directory")->required();
  eval->add_option("--labels", cfg.labels, "Label file or directory")->required();
  eval->add_option("--exclude-classes", flags.exclude,
                   "Classes left out of the reduced mean (default 14,15,16)");

  auto* bench = app.add_subcommand("bench", "Latency benchmark");
  add_common(bench, cfg, flags);
  bench->add_option("--size", flags.size, "Input size HxW (default 1024x2048)");
  bench->add_option("--weights", cfg.weights, "Weight container (random weights if omitted)");
  bench->add_option("--warmup", cfg.warmup, "Warm-up iterations")->capture_default_str();
  bench->add_option("--iters", cfg.iters, "Measured iterations")->capture_default_str();
  bench->add_flag("--skip-blocks", cfg.skip_blocks, "Skip the single-block comparison");

  auto* selftest = app.add_subcommand("selftest", "Built-in consistency checks");
  selftest->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str();

  auto* init = app.add_subcommand("init-weights", "Write a container of random weights");
  add_common(init, cfg, flags);
  init->add_option("--output", cfg.output, "Container path")->required();
  init->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::kConfig;
  }

  try {
    if (!flags.size.empty()) std::tie(cfg.height, cfg.width) = parse_size(flags.size);
    if (eval->count("--exclude-classes")) cfg.exclude_classes = parse_class_list(flags.exclude);
    cfg.report = parse_report_format(flags.report);

    if (*describe) return cmd_describe(cfg, std::cout);
    if (*fov) return cmd_fov(cfg, std::cout);
    if (*infer) return cmd_infer(cfg, std::cout);
    if (*eval) return cmd_eval(cfg, std::cout);
    if (*bench) return cmd_bench(cfg, std::cout);
    if (*selftest) return cmd_selftest(cfg, std::cout);
    if (*init) return cmd_init_weights(cfg, std::cout);
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::kFailure;
  }
  return exit_code::kFailure;
}
