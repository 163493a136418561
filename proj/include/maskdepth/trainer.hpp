#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maskdepth/config.hpp"
#include "maskdepth/scene.hpp"

namespace maskdepth {

struct RunRecord {
    std::string config_snapshot;
    double initial_loss = 0.0;  // mean over the first batches before any update
    std::vector<double> epoch_losses;
    std::vector<double> epoch_photometric;
    std::vector<double> epoch_smoothness;
    std::vector<double> epoch_lr;
    double final_loss = 0.0;  // last epoch mean
    int64_t total_steps = 0;
    std::string checkpoint_digest;  // empty when no checkpoint was written
};

struct TrainResult {
    RunRecord record;
    DepthNetwork depth;
    EgoMotionNetwork ego;
};

/// Joint training of the depth and ego-motion networks with a common loss.
/// Deterministic: (config, seed) fixes batch order, masks and all updates.
/// Aborts with a diagnostic on a non-finite loss.
TrainResult train(const TrainConfig& cfg);
TrainResult train(const TrainConfig& cfg, const Dataset& dataset);

struct BatchLoss {
    Tensor total;
    Tensor photometric;
    Tensor smoothness;
};

/// One batch of the training objective; exposed for tests and attacks that
/// need the same loss construction as the trainer.
BatchLoss batch_training_loss(const TrainConfig& cfg, const Dataset& dataset,
                              const DepthNetwork& depth_net, const EgoMotionNetwork& ego_net,
                              const std::vector<int64_t>& triplet_indices, int64_t step);

}  // namespace maskdepth
