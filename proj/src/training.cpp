#include "rnnsm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rnnsm/errors.hpp"
#include "rnnsm/kernels.hpp"

namespace rnnsm::train {

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"adam", c.adam}, {"seed", c.seed}};
}

// Keys absent from `j` keep the values already in `c`, so callers can
// layer a partial section over model-specific defaults.
void from_json(const nlohmann::json& j, TrainingConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("adam")) c.adam = j.at("adam").get<net::AdamConfig>();
  if (j.contains("learning_rate")) c.adam.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.value("seed", c.seed);
  if (c.epochs < 0 || c.batch_size < 1) throw ConfigError("epochs must be >= 0 and batch_size >= 1");
}

double sequence_gradient(const net::Network& network, const features::UserSequence& sequence,
                         const SequenceLossFn& loss, std::span<double> gradient) {
  const auto cache = network.forward(sequence);
  std::vector<double> grad_o(cache.output.size(), 0.0);
  const double value = loss(sequence, cache.output, grad_o);
  network.backward(cache, grad_o, gradient);
  return value;
}

double mean_loss(const net::Network& network, const std::vector<features::UserSequence>& sequences,
                 const SequenceLossFn& loss) {
  if (sequences.empty()) return 0.0;
  const auto per_user = kernels::map_parallel(sequences.size(), [&](std::size_t i) {
    const auto cache = network.forward(sequences[i]);
    std::vector<double> grad_o(cache.output.size(), 0.0);
    return loss(sequences[i], cache.output, grad_o);
  });
  double total = 0.0;
  for (double v : per_user) total += v;
  return total / static_cast<double>(sequences.size());
}

TrainingTrace train_network(net::Network& network, net::AdamState& optimizer,
                            const std::vector<features::UserSequence>& sequences,
                            const SequenceLossFn& loss, const TrainingConfig& config) {
  if (sequences.empty()) throw ValidationError("train_network: no training sequences");
  TrainingTrace trace;
  trace.epoch_loss.push_back(mean_loss(network, sequences, loss));
  if (!std::isfinite(trace.epoch_loss.back())) {
    trace.diverged = true;
    return trace;
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gradient(network.parameter_count());
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<double> last_good(network.parameters().begin(), network.parameters().end());
    const net::AdamState last_good_optimizer = optimizer;
    std::shuffle(order.begin(), order.end(), rng);
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::span<const std::size_t> users(order.data() + start,
                                                 std::min(batch, order.size() - start));
        const double batch_loss = kernels::accumulate_gradients_parallel(
            users,
            [&](std::size_t u, std::span<double> grad) {
              return sequence_gradient(network, sequences[u], loss, grad);
            },
            gradient);
        if (!std::isfinite(batch_loss)) throw NumericalError("non-finite batch loss");
        const double inv = 1.0 / static_cast<double>(users.size());
        for (auto& g : gradient) g *= inv;
        net::apply_update_with_norm_projection(network, gradient, optimizer, config.adam);
      }
      const double epoch_loss = mean_loss(network, sequences, loss);
      if (!std::isfinite(epoch_loss)) throw NumericalError("non-finite epoch loss");
      trace.epoch_loss.push_back(epoch_loss);
    } catch (const NumericalError&) {
      std::copy(last_good.begin(), last_good.end(), network.parameters().begin());
      optimizer = last_good_optimizer;
      trace.diverged = true;
      break;
    }
  }
  return trace;
}

}  // namespace rnnsm::train
