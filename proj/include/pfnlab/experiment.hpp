#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pfnlab/config.hpp"
#include "pfnlab/io.hpp"

namespace pfnlab {

inline constexpr const char* kToolVersion = "0.1.0";

struct ManifestFile {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string config_sha256;
  std::string tool_version = kToolVersion;
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<ManifestFile> files;
  double duration_seconds = 0.0;
  /// "ok" or "failed"; on failure the listed files are partial.
  std::string status = "ok";
  std::string error;
};

/// Raised after a failed run has written its manifest.
class RunFailed : public std::runtime_error {
 public:
  RunFailed(const std::string& what, RunManifest manifest)
      : std::runtime_error(what), manifest_(std::move(manifest)) {}
  const RunManifest& manifest() const { return manifest_; }

 private:
  RunManifest manifest_;
};

/// Fitted parameters for cfg.family using cfg.pretrain; fills the log when given.
FittedParams run_pretraining(const ExperimentConfig& cfg,
                             std::vector<TrainingLogRow>* log = nullptr,
                             double* initial_loss = nullptr, double* final_loss = nullptr);

/// The predictor described by cfg.predictor (loading or pretraining parameters
/// as requested).
Predictor build_predictor(const ExperimentConfig& cfg);

/// Runs the configured pipeline and writes CSV artifacts plus manifest.json
/// into cfg.output_dir. Throws ConfigError before any work for unusable
/// configs and RunFailed (after writing a "failed" manifest) otherwise.
RunManifest run_experiment(const ExperimentConfig& cfg);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

/// Line chart of the named y columns against x, as a standalone SVG.
struct PlotOptions {
  std::string x_column = "n";
  std::vector<std::string> y_columns;
  bool log_x = true;
  bool log_y = true;
  std::string title;
};

void render_svg(const CsvTable& table, const PlotOptions& options,
                const std::filesystem::path& path);

}  // namespace pfnlab
