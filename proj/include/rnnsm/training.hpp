#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnnsm/features.hpp"
#include "rnnsm/net.hpp"

namespace rnnsm::train {

/// Loss of one user's sequence given the network outputs o_j; writes
/// d(loss)/d(o_j) into grad_o.
using SequenceLossFn = std::function<double(const features::UserSequence& sequence,
                                            std::span<const double> outputs,
                                            std::span<double> grad_outputs)>;

struct TrainingConfig {
  int epochs = 20;
  int batch_size = 32;
  net::AdamConfig adam;
  std::uint64_t seed = 7;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

struct TrainingTrace {
  /// Mean per-user loss before training (index 0) and after each epoch.
  std::vector<double> epoch_loss;
  bool diverged = false;
};

/// Loss and parameter gradient of one sequence: forward, loss, backward.
double sequence_gradient(const net::Network& network, const features::UserSequence& sequence,
                         const SequenceLossFn& loss, std::span<double> gradient);

/// Mean per-user loss over `sequences`.
double mean_loss(const net::Network& network, const std::vector<features::UserSequence>& sequences,
                 const SequenceLossFn& loss);

/// Minibatch Adam on the mean per-user loss with a seeded shuffle per epoch.
/// On a non-finite loss or a numerical failure the parameters of the last
/// completed epoch are restored and the trace is marked diverged.
TrainingTrace train_network(net::Network& network, net::AdamState& optimizer,
                            const std::vector<features::UserSequence>& sequences,
                            const SequenceLossFn& loss, const TrainingConfig& config);

}  // namespace rnnsm::train
