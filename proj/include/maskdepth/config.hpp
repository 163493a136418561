#pragma once

#include <cstdint>
#include <string>

#include "maskdepth/losses.hpp"
#include "maskdepth/masking.hpp"
#include "maskdepth/networks.hpp"

namespace maskdepth {

enum class MaskTarget { depth_only, ego_only, both, none };

std::string to_string(MaskTarget target);
MaskTarget mask_target_from_string(const std::string& name);
std::string to_string(LossRegion region);
LossRegion loss_region_from_string(const std::string& name);
std::string to_string(PhotometricCombine combine);
PhotometricCombine photometric_combine_from_string(const std::string& name);

/// Full training run description. Desk-scale defaults: 64x64 frames, batch 4,
/// 20 epochs over a 400-triplet set (2000 steps), lr decay x10 after epoch 15.
struct TrainConfig {
    int epochs = 20;
    int batch_size = 4;
    double lr = 3e-4;
    double lr_decay_factor = 10.0;
    int lr_decay_epoch = 15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;

    LossWeights loss_weights;
    LossRegion loss_region = LossRegion::complete;
    PhotometricCombine photometric_combine = PhotometricCombine::min;

    MaskConfig mask{8, 0.25, 0.3, 0};  // cell edge == patch edge by default
    MaskTarget mask_target = MaskTarget::depth_only;
    MaskStrategy depth_mask_strategy = MaskStrategy::blockwise;
    MaskStrategy ego_mask_strategy = MaskStrategy::blockwise;

    ViTConfig vit;

    uint64_t seed = 0;
    std::string dataset_dir;
    std::string checkpoint_path;

    void validate() const;
};

/// key=value file with [section] headers; sections: train, loss, mask, model.
TrainConfig load_train_config(const std::string& path);
TrainConfig parse_train_config(const std::string& text);

/// "section.key=value" override, e.g. "train.lr=1e-4". Throws on unknown keys.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// Round-trippable snapshot in the config file format.
std::string serialize(const TrainConfig& cfg);

}  // namespace maskdepth
