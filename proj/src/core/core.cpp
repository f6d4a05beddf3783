#include "pfnlab/core.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace pfnlab {

Dataset::Dataset(std::size_t dim, std::size_t num_classes)
    : dim_(dim), num_classes_(num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("Dataset: need at least two classes");
  }
}

Dataset::Dataset(std::size_t dim, std::size_t num_classes, std::vector<Example> examples)
    : Dataset(dim, num_classes) {
  for (const auto& e : examples) check(e);
  examples_ = std::move(examples);
}

void Dataset::check(const Example& example) const {
  if (example.label >= num_classes_) {
    std::ostringstream msg;
    msg << "Dataset: label " << example.label << " out of range for " << num_classes_
        << " classes";
    throw std::invalid_argument(msg.str());
  }
  if (example.features.size() != dim_) {
    std::ostringstream msg;
    msg << "Dataset: feature length " << example.features.size() << ", expected " << dim_;
    throw std::invalid_argument(msg.str());
  }
  for (double v : example.features) {
    if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite feature");
  }
}

void Dataset::push_back(Example example) {
  check(example);
  examples_.push_back(std::move(example));
}

void Dataset::set_label(std::size_t index, std::size_t label) {
  if (label >= num_classes_) throw std::invalid_argument("Dataset: label out of range");
  examples_.at(index).label = label;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(dim_, num_classes_);
  out.examples_.reserve(indices.size());
  for (std::size_t i : indices) out.examples_.push_back(examples_.at(i));
  return out;
}

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("ClassDistribution: empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      std::ostringstream msg;
      msg << "ClassDistribution: entry " << p << " outside [0, 1]";
      throw std::invalid_argument(msg.str());
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "ClassDistribution: entries sum to " << sum;
    throw std::invalid_argument(msg.str());
  }
}

ClassDistribution ClassDistribution::uniform(std::size_t num_classes) {
  if (num_classes == 0) throw std::invalid_argument("ClassDistribution: zero classes");
  return ClassDistribution(
      std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

ClassDistribution ClassDistribution::binary(double p1) {
  return ClassDistribution({1.0 - p1, p1});
}

ClassDistribution ClassDistribution::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("ClassDistribution: invalid weight");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("ClassDistribution: weights sum to zero");
  for (double& w : weights) w /= sum;
  return ClassDistribution(std::move(weights));
}

std::uint64_t splitmix64(std::uint64_t state) {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ std::rotl(stream, 32));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pfnlab
