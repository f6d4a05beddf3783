#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfnlab/diagnostics.hpp"
#include "pfnlab/predictors.hpp"
#include "pfnlab/pretrain.hpp"
#include "pfnlab/priors.hpp"

namespace pfnlab {

/// Invalid configuration. line() is 0 when the problem is not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line, std::string field)
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// INI-style text ---------------------------------------------------------------------
//
//   # or ; starts a comment line
//   [section]            sections may repeat ([model] does, once per prior member)
//   key = value          whitespace around key and value is trimmed

struct IniEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct IniSection {
  std::string name;
  std::size_t line = 0;
  std::vector<IniEntry> entries;

  const IniEntry* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::uint64_t integer(const std::string& key) const;
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  /// Comma-separated numbers.
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::size_t> integers(const std::string& key) const;
  /// Rejects keys not in the list.
  void allow_only(std::initializer_list<const char*> keys) const;
};

struct IniDocument {
  std::string source;
  std::vector<IniSection> sections;

  const IniSection* section(const std::string& name) const;
  const IniSection& require(const std::string& name) const;
  std::vector<const IniSection*> all(const std::string& name) const;
};

IniDocument parse_ini(const std::string& text, const std::string& source = "<config>");
IniDocument load_ini(const std::filesystem::path& path);

// Experiment -------------------------------------------------------------------------

enum class ExperimentKind { Pretrain, BiasVariance, Probe, PpdCheck };
enum class ProbeKind { Sensitivity, Locality, Tilt, Symmetry };

struct PredictorSpec {
  /// True when the config has a [predictor] section.
  bool present = false;
  /// window | tree | ensemble | transformer | constant | first-label | ppd
  std::string family = "window";
  bool localized = false;
  LocalizerConfig localizer{};
  WindowSmootherParams window{0.5, BandwidthScaling::Fixed};
  TreeParams tree{};
  double constant_p1 = 0.5;
  /// Parameter container to load, resolved against the config directory.
  std::optional<std::filesystem::path> params_file;
  /// Pretraining config to run in-process for the fitted parameters.
  std::optional<std::filesystem::path> pretrain_config;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::BiasVariance;
  ProbeKind probe = ProbeKind::Sensitivity;
  /// Pretraining family for kind = pretrain.
  std::string family = "transformer";
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::filesystem::path output_dir = "out";
  std::filesystem::path base_dir = ".";

  std::optional<FinitePrior> prior;
  SizePrior size_prior{1, 128};
  FeatureLaw feature_law = StandardNormal{1};
  std::optional<ConditionalModel> truth;
  std::optional<ConditionalModel> tilde;
  PredictorSpec predictor{};

  std::vector<std::size_t> n_grid;
  std::size_t replicates = 500;
  std::size_t test_points = 100;
  std::size_t trials = 50;
  std::size_t mc_draws = 1000;
  std::size_t mc_samples = 100000;
  std::size_t symmetry_n = 6;
  std::size_t permutation_samples = 1000;
  std::optional<Features> test_point;
  EpsilonRule epsilon_rule = EpsilonRule::KnnRadius;
  double epsilon = 1.0;

  PretrainConfig pretrain{FinitePrior({ConstantBernoulli{0.5}}, {1.0}, StandardNormal{1}),
                          SizePrior{1, 128}};

  std::string source_text;
};

ExperimentConfig parse_experiment(const IniDocument& doc);
ExperimentConfig load_experiment(const std::filesystem::path& path);

ConditionalModel parse_model(const IniSection& section, std::size_t dim);
FeatureLaw parse_feature_law(const IniSection& section);

const char* to_string(ExperimentKind kind);
const char* to_string(ProbeKind kind);

}  // namespace pfnlab
