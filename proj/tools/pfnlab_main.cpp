#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "pfnlab/experiment.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

void add_run_flags(CLI::App* app, RunOptions& opts) {
  app->add_option("--config", opts.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", opts.seed, "Override the config seed");
  app->add_option("--out", opts.out, "Output directory");
  app->add_option("--workers", opts.workers, "Worker threads (0 = logical cores)");
}

int run(const RunOptions& opts, pfnlab::ExperimentKind expected,
        std::optional<pfnlab::ProbeKind> probe) {
  try {
    pfnlab::ExperimentConfig cfg = pfnlab::load_experiment(opts.config);
    if (cfg.kind != expected) {
      std::cerr << opts.config << ": kind = " << pfnlab::to_string(cfg.kind)
                << " does not match subcommand " << pfnlab::to_string(expected) << "\n";
      return 2;
    }
    if (probe && cfg.probe != *probe) {
      std::cerr << opts.config << ": probe = " << pfnlab::to_string(cfg.probe)
                << " does not match requested probe " << pfnlab::to_string(*probe) << "\n";
      return 2;
    }
    if (opts.seed) {
      cfg.seed = *opts.seed;
      cfg.pretrain.seed = *opts.seed;
    }
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.workers) {
      cfg.workers = *opts.workers;
      cfg.pretrain.sgd.workers = *opts.workers;
    }
    const pfnlab::RunManifest m = pfnlab::run_experiment(cfg);
    for (const auto& f : m.files) std::cout << (cfg.output_dir / f.name).string() << "\n";
    std::cout << (cfg.output_dir / "manifest.json").string() << "\n";
    return 0;
  } catch (const pfnlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pfnlab::RunFailed& e) {
    std::cerr << "run failed: " << e.what() << " (manifest marks artifacts as partial)\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pfnlab: prior-data fitted network laboratory"};
  app.set_version_flag("--version", pfnlab::kToolVersion);
  app.require_subcommand(1);

  RunOptions pretrain_opts, bv_opts, probe_opts, ppd_opts;
  auto* pretrain = app.add_subcommand("pretrain", "Fit predictor parameters by Monte-Carlo risk minimization");
  add_run_flags(pretrain, pretrain_opts);
  auto* bv = app.add_subcommand("bias-variance", "Bias/variance decomposition over an n grid");
  add_run_flags(bv, bv_opts);
  auto* probe = app.add_subcommand("probe", "Sensitivity, locality, tilt or symmetry probes");
  std::string probe_kind;
  probe->add_option("kind", probe_kind, "sensitivity | locality | tilt | symmetry")
      ->required()
      ->check(CLI::IsMember({"sensitivity", "locality", "tilt", "symmetry"}));
  add_run_flags(probe, probe_opts);
  auto* ppd = app.add_subcommand("ppd-check", "Exact PPD against challengers on paired draws");
  add_run_flags(ppd, ppd_opts);

  auto* plot = app.add_subcommand("plot", "Render an SVG line chart from a CSV artifact");
  std::string csv_path, svg_path;
  pfnlab::PlotOptions plot_opts;
  bool linear_x = false, linear_y = false;
  plot->add_option("--csv", csv_path, "Input CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", svg_path, "Output SVG")->required();
  plot->add_option("--x", plot_opts.x_column, "x column");
  plot->add_option("--y", plot_opts.y_columns, "y columns")->required();
  plot->add_option("--title", plot_opts.title, "Chart title");
  plot->add_flag("--linear-x", linear_x, "Linear x axis");
  plot->add_flag("--linear-y", linear_y, "Linear y axis");

  CLI11_PARSE(app, argc, argv);

  using pfnlab::ExperimentKind;
  if (*pretrain) return run(pretrain_opts, ExperimentKind::Pretrain, std::nullopt);
  if (*bv) return run(bv_opts, ExperimentKind::BiasVariance, std::nullopt);
  if (*ppd) return run(ppd_opts, ExperimentKind::PpdCheck, std::nullopt);
  if (*probe) {
    std::optional<pfnlab::ProbeKind> kind;
    if (probe_kind == "sensitivity") kind = pfnlab::ProbeKind::Sensitivity;
    if (probe_kind == "locality") kind = pfnlab::ProbeKind::Locality;
    if (probe_kind == "tilt") kind = pfnlab::ProbeKind::Tilt;
    if (probe_kind == "symmetry") kind = pfnlab::ProbeKind::Symmetry;
    return run(probe_opts, ExperimentKind::Probe, kind);
  }
  try {
    plot_opts.log_x = !linear_x;
    plot_opts.log_y = !linear_y;
    pfnlab::render_svg(pfnlab::read_csv(csv_path), plot_opts, svg_path);
    std::cout << svg_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
