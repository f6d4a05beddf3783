#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfnlab {

using Features = std::vector<double>;

/// One labeled observation (Y, X).
struct Example {
  std::size_t label = 0;
  Features features;
};

/// Ordered context set D_n. All examples share the feature dimension and the
/// class count; both are fixed at construction so an empty dataset still knows
/// its shape.
class Dataset {
 public:
  Dataset(std::size_t dim, std::size_t num_classes);
  Dataset(std::size_t dim, std::size_t num_classes, std::vector<Example> examples);

  void push_back(Example example);
  void set_label(std::size_t index, std::size_t label);

  /// Examples at `indices`, in the order given.
  Dataset subset(std::span<const std::size_t> indices) const;

  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return num_classes_; }

  const Example& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<Example>& examples() const { return examples_; }
  auto begin() const { return examples_.begin(); }
  auto end() const { return examples_.end(); }

 private:
  void check(const Example& example) const;

  std::size_t dim_;
  std::size_t num_classes_;
  std::vector<Example> examples_;
};

/// Probability vector over classes. Construction validates that every entry is
/// in [0, 1] and that the entries sum to one within 1e-12.
class ClassDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit ClassDistribution(std::vector<double> probs);

  static ClassDistribution uniform(std::size_t num_classes);
  /// (1 - p1, p1).
  static ClassDistribution binary(double p1);
  /// Rescales nonnegative weights to sum one, then validates.
  static ClassDistribution normalized(std::vector<double> weights);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::span<const double> probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// A predictor q(. | x, D_n). Every predictor family in the library is exposed
/// through this signature.
using Predictor =
    std::function<ClassDistribution(std::span<const double> x, const Dataset& data)>;

struct SeedSpec {
  std::uint64_t base_seed = 0;
  std::uint64_t stream_id = 0;
};

/// SplitMix64 output function: adds the golden-ratio increment, then applies
/// the published finalizer (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9
/// and 0x94D049BB133111EB). Bijective on 64-bit words.
std::uint64_t splitmix64(std::uint64_t state);

/// splitmix64(base ^ rotl(stream, 32)). For a fixed base the map from stream
/// to seed is injective.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline std::uint64_t derive_seed(const SeedSpec& spec) {
  return derive_seed(spec.base_seed, spec.stream_id);
}

/// Euclidean distance helpers used across modules.
double squared_distance(std::span<const double> a, std::span<const double> b);
double euclidean_norm(std::span<const double> v);

/// Runs body(i) for i in [0, count) on up to `workers` threads (0 means one
/// per logical core). Each index is visited exactly once; the first exception
/// thrown by any worker is rethrown on the caller's thread.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace pfnlab
