#include "pfnlab/experiment.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>

#include "pfnlab/ppd.hpp"

namespace pfnlab {
namespace fs = std::filesystem;

namespace {

fs::path resolve(const ExperimentConfig& cfg, const fs::path& p) {
  return p.is_absolute() ? p : cfg.base_dir / p;
}

FittedParams load_or_pretrain(const ExperimentConfig& cfg) {
  const auto& spec = cfg.predictor;
  if (spec.params_file) return from_container(read_container(resolve(cfg, *spec.params_file)));
  const ExperimentConfig sub = load_experiment(resolve(cfg, *spec.pretrain_config));
  if (sub.kind != ExperimentKind::Pretrain) {
    throw ConfigError(spec.pretrain_config->string() + ": referenced config is not a pretrain config",
                      0, "pretrain");
  }
  return run_pretraining(sub);
}

Predictor predictor_from(const FittedParams& params) {
  return std::visit(
      [](const auto& p) -> Predictor {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, WindowSmootherParams>) return make_window_predictor(p);
        else if constexpr (std::is_same_v<T, TreeParams>) return make_tree_predictor(p);
        else if constexpr (std::is_same_v<T, EnsembleParams>) return make_ensemble_predictor(p);
        else return make_transformer_predictor(p);
      },
      params);
}

class ArtifactWriter {
 public:
  ArtifactWriter(fs::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {}

  void csv(const std::string& name, const CsvTable& table) {
    write_csv(table, dir_ / name);
    record(name);
  }
  void container(const std::string& name, const ParamContainer& c) {
    write_container(c, dir_ / name);
    record(name);
  }

 private:
  void record(const std::string& name) {
    const fs::path p = dir_ / name;
    manifest_.files.push_back({name, sha256_file(p), fs::file_size(p)});
  }
  fs::path dir_;
  RunManifest& manifest_;
};

}  // namespace

FittedParams run_pretraining(const ExperimentConfig& cfg, std::vector<TrainingLogRow>* log,
                             double* initial_loss, double* final_loss) {
  auto finish = [&](auto result) -> FittedParams {
    if (log) *log = result.log;
    if (initial_loss) *initial_loss = result.initial_holdout_loss;
    if (final_loss) *final_loss = result.holdout_loss;
    return result.params;
  };
  if (cfg.family == "window") return finish(pretrain_window(cfg.pretrain));
  if (cfg.family == "tree") return finish(pretrain_tree(cfg.pretrain));
  if (cfg.family == "ensemble") return finish(pretrain_ensemble(cfg.pretrain));
  if (cfg.family == "transformer") return finish(pretrain_transformer(cfg.pretrain));
  throw ConfigError("unknown pretraining family '" + cfg.family + "'", 0, "family");
}

Predictor build_predictor(const ExperimentConfig& cfg) {
  const auto& spec = cfg.predictor;
  Predictor base;
  if (spec.family == "constant") {
    base = make_constant_predictor(ClassDistribution::binary(spec.constant_p1));
  } else if (spec.family == "first-label") {
    base = make_first_label_predictor();
  } else if (spec.family == "ppd") {
    if (!cfg.prior) throw ConfigError("ppd predictor needs [model] sections", 0, "family");
    base = ppd_predictor(*cfg.prior);
  } else if (spec.params_file || spec.pretrain_config) {
    base = predictor_from(load_or_pretrain(cfg));
  } else if (spec.family == "window") {
    base = make_window_predictor(spec.window);
  } else if (spec.family == "tree") {
    base = make_tree_predictor(spec.tree);
  } else {
    throw ConfigError("predictor family '" + spec.family + "' needs params or pretrain", 0, "family");
  }
  return spec.localized ? make_localized(std::move(base), spec.localizer) : base;
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["config_sha256"] = m.config_sha256;
  j["tool_version"] = m.tool_version;
  j["kind"] = m.kind;
  j["seed"] = m.seed;
  j["status"] = m.status;
  if (!m.error.empty()) j["error"] = m.error;
  j["partial"] = m.status != "ok";
  j["duration_seconds"] = m.duration_seconds;
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : m.files) {
    j["files"].push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.config_sha256 = sha256_hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(cfg.source_text.data()), cfg.source_text.size()));
  manifest.kind = to_string(cfg.kind);
  if (cfg.kind == ExperimentKind::Probe) manifest.kind += std::string(":") + to_string(cfg.probe);
  manifest.seed = cfg.seed;

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
  ArtifactWriter out(cfg.output_dir, manifest);
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  try {
    switch (cfg.kind) {
      case ExperimentKind::Pretrain: {
        std::vector<TrainingLogRow> log;
        double initial = 0.0, final_loss = 0.0;
        const FittedParams params = run_pretraining(cfg, &log, &initial, &final_loss);
        out.container("params.bin", to_container(params));
        out.csv("training_log.csv", to_csv(log));
        CsvTable summary{{"family", "mc_sets", "holdout_sets", "seed", "initial_holdout_loss",
                          "holdout_loss"},
                         {{cfg.family, std::to_string(cfg.pretrain.mc_sets),
                           std::to_string(cfg.pretrain.holdout_sets), std::to_string(cfg.seed),
                           format_double(initial), format_double(final_loss)}}};
        out.csv("pretrain_summary.csv", summary);
        break;
      }
      case ExperimentKind::BiasVariance: {
        const Predictor predictor = build_predictor(cfg);
        BiasVarianceSettings s;
        s.n_grid = cfg.n_grid;
        s.replicates = cfg.replicates;
        s.test_points = cfg.test_points;
        s.seed = cfg.seed;
        s.workers = cfg.workers;
        out.csv("bias_variance.csv",
                to_csv(bias_variance(predictor, *cfg.truth, cfg.feature_law, s)));
        break;
      }
      case ExperimentKind::Probe: {
        switch (cfg.probe) {
          case ProbeKind::Sensitivity: {
            SensitivitySettings s;
            s.n_grid = cfg.n_grid;
            s.trials = cfg.trials;
            s.seed = cfg.seed;
            s.workers = cfg.workers;
            s.test_point = cfg.test_point;
            const auto est = sensitivity_probe(build_predictor(cfg), *cfg.truth, cfg.feature_law, s);
            out.csv("sensitivity.csv", to_csv(est));
            out.csv("sensitivity_fit.csv", sensitivity_fit_csv(est));
            break;
          }
          case ProbeKind::Locality: {
            LocalitySettings s;
            s.n_grid = cfg.n_grid;
            s.replicates = cfg.replicates;
            s.rule = cfg.epsilon_rule;
            s.epsilon = cfg.epsilon;
            s.localizer = cfg.predictor.localizer;
            s.seed = cfg.seed;
            s.workers = cfg.workers;
            s.test_point = cfg.test_point;
            out.csv("locality.csv", to_csv(locality_probe(build_predictor(cfg), *cfg.truth,
                                                          *cfg.tilde, cfg.feature_law, s)));
            break;
          }
          case ProbeKind::Tilt: {
            if (cfg.predictor.family != "transformer") {
              throw ConfigError("the tilt probe needs a transformer predictor", 0, "family");
            }
            const auto params = std::get<TransformerParams>(load_or_pretrain(cfg));
            Features x;
            if (cfg.test_point) {
              x = *cfg.test_point;
            } else {
              Rng rng(derive_seed(cfg.seed, 0));
              x = sample_features(cfg.feature_law, rng);
            }
            TiltSettings s;
            s.n_grid = cfg.n_grid;
            s.mc_samples = cfg.mc_samples;
            s.replicates = cfg.replicates;
            s.seed = cfg.seed;
            out.csv("tilt.csv", to_csv(tilt_limit(params, x, *cfg.truth, cfg.feature_law, s)));
            break;
          }
          case ProbeKind::Symmetry: {
            SymmetrizeSettings s;
            s.n = cfg.symmetry_n;
            s.replicates = cfg.replicates;
            s.permutation_samples = cfg.permutation_samples;
            s.seed = cfg.seed;
            out.csv("symmetry.csv",
                    to_csv(symmetrize_check(build_predictor(cfg), *cfg.truth, cfg.feature_law, s)));
            break;
          }
        }
        break;
      }
      case ExperimentKind::PpdCheck: {
        const FinitePrior& prior = *cfg.prior;
        std::vector<NamedPredictor> challengers;
        challengers.push_back({"uniform", make_constant_predictor(ClassDistribution::uniform(2))});
        const Predictor ppd = ppd_predictor(prior);
        challengers.push_back({"ppd_mix10", [ppd](std::span<const double> x, const Dataset& d) {
                                 ClassDistribution p = ppd(x, d);
                                 std::vector<double> q(p.size());
                                 for (std::size_t y = 0; y < q.size(); ++y) {
                                   q[y] = 0.9 * p[y] + 0.1 / static_cast<double>(q.size());
                                 }
                                 return ClassDistribution::normalized(std::move(q));
                               }});
        if (cfg.predictor.present && cfg.predictor.family != "ppd") {
          challengers.push_back({cfg.predictor.family, build_predictor(cfg)});
        }
        out.csv("ppd_check.csv",
                to_csv(ppd_optimality_check(prior, cfg.size_prior, challengers, cfg.mc_draws, cfg.seed)));
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.error = e.what();
    manifest.duration_seconds = elapsed();
    write_manifest(manifest, cfg.output_dir / "manifest.json");
    throw RunFailed(e.what(), manifest);
  }
  manifest.duration_seconds = elapsed();
  write_manifest(manifest, cfg.output_dir / "manifest.json");
  return manifest;
}

}  // namespace pfnlab
