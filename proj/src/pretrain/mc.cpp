#include <cmath>
#include <sstream>

#include "pfnlab/pretrain.hpp"

namespace pfnlab {

std::vector<MCSample> generate_mc_samples(const FinitePrior& prior, const SizePrior& size_prior,
                                          std::size_t count, std::uint64_t seed) {
  std::vector<MCSample> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    Rng rng(derive_seed(seed, j));
    const auto& model = prior.models()[sample_task(prior, rng)];
    const std::size_t n = sample_size(size_prior, rng);
    Dataset context = sample_dataset(model, prior.feature_law(), n, rng);
    Example query = sample_example(model, prior.feature_law(), rng);
    out.push_back({std::move(context), std::move(query)});
  }
  return out;
}

double mc_loss(const Predictor& predictor, std::span<const MCSample> samples) {
  if (samples.empty()) throw std::invalid_argument("mc_loss: no samples");
  double total = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto& s = samples[j];
    const double p = predictor(s.query.features, s.context)[s.query.label];
    const double term = -std::log(clamp_probability(p));
    if (!std::isfinite(term)) {
      std::ostringstream msg;
      msg << "mc_loss: non-finite loss at sample " << j;
      throw NonFiniteLoss(msg.str(), j);
    }
    total += term;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace pfnlab
