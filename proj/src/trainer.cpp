#include "maskdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "maskdepth/losses.hpp"
#include "maskdepth/optim.hpp"

namespace maskdepth {

namespace {

Tensor stack_images(const std::vector<const Image*>& images) {
    std::vector<Tensor> parts;
    parts.reserve(images.size());
    for (const Image* img : images) {
        parts.push_back(reshape(to_tensor(*img), {1, img->height, img->width, img->channels}));
    }
    return concat(parts, 0);
}

MaskGrid draw_mask(const MaskConfig& base, MaskStrategy strategy, uint64_t seed, int h, int w) {
    MaskConfig cfg = base;
    cfg.seed = seed;
    return strategy == MaskStrategy::blockwise ? blockwise_mask(cfg, h, w)
                                               : random_mask(cfg, h, w);
}

}  // namespace

BatchLoss batch_training_loss(const TrainConfig& cfg, const Dataset& dataset,
                              const DepthNetwork& depth_net, const EgoMotionNetwork& ego_net,
                              const std::vector<int64_t>& triplet_indices, int64_t step) {
    const Intrinsics& K = dataset.intrinsics();
    const int64_t B = static_cast<int64_t>(triplet_indices.size());
    const int64_t H = K.height, W = K.width;

    std::vector<Triplet> triplets;
    triplets.reserve(B);
    for (int64_t idx : triplet_indices) triplets.push_back(dataset.triplet(idx));

    std::vector<const Image*> targets, prevs, nexts;
    for (const Triplet& t : triplets) {
        targets.push_back(&t.target);
        prevs.push_back(&t.prev);
        nexts.push_back(&t.next);
    }
    Tensor targets_b = stack_images(targets);
    Tensor prevs_b = stack_images(prevs);
    Tensor nexts_b = stack_images(nexts);

    const bool mask_depth =
        cfg.mask_target == MaskTarget::depth_only || cfg.mask_target == MaskTarget::both;
    const bool mask_ego =
        cfg.mask_target == MaskTarget::ego_only || cfg.mask_target == MaskTarget::both;

    std::vector<MaskGrid> depth_masks;
    if (mask_depth) {
        const uint64_t base = derive_seed(cfg.seed, static_cast<uint64_t>(step), 0xd3);
        for (int64_t i = 0; i < B; ++i) {
            depth_masks.push_back(draw_mask(cfg.mask, cfg.depth_mask_strategy,
                                            base ^ static_cast<uint64_t>(i), static_cast<int>(H),
                                            static_cast<int>(W)));
        }
    }
    std::vector<MaskGrid> ego_masks;
    if (mask_ego) {
        const uint64_t base = derive_seed(cfg.seed, static_cast<uint64_t>(step), 0xe6);
        for (int64_t i = 0; i < 2 * B; ++i) {
            ego_masks.push_back(draw_mask(cfg.mask, cfg.ego_mask_strategy,
                                          base ^ static_cast<uint64_t>(i), static_cast<int>(H),
                                          static_cast<int>(W)));
        }
    }

    DepthNetwork::Output depth_out = depth_net.forward(targets_b, depth_masks);

    // ego pairs: rows [0,B) are {I-1, I0}, rows [B,2B) are {I0, I1}
    Tensor pairs = concat({concat({prevs_b, targets_b}, 3), concat({targets_b, nexts_b}, 3)}, 0);
    Tensor ego_out = ego_net.forward(pairs, ego_masks);

    std::vector<Tensor> synth_parts, target_parts;
    std::vector<std::vector<uint8_t>> validity;
    synth_parts.reserve(2 * B);
    target_parts.reserve(2 * B);
    for (int64_t i = 0; i < B; ++i) {
        Tensor depth_i = reshape(slice(depth_out.depth, 0, i, i + 1), {H, W});
        Tensor target_i = reshape(slice(targets_b, 0, i, i + 1), {H, W, 3});
        Tensor prev_i = reshape(slice(prevs_b, 0, i, i + 1), {H, W, 3});
        Tensor next_i = reshape(slice(nexts_b, 0, i, i + 1), {H, W, 3});
        Pose to_prev = EgoMotionNetwork::pose_from_output(ego_out, i).inverse();
        Pose to_next = EgoMotionNetwork::pose_from_output(ego_out, B + i);
        WarpResult w_prev = synthesize_target(prev_i, depth_i, to_prev, K);
        WarpResult w_next = synthesize_target(next_i, depth_i, to_next, K);
        synth_parts.push_back(reshape(w_prev.image, {1, H, W, 3}));
        synth_parts.push_back(reshape(w_next.image, {1, H, W, 3}));
        target_parts.push_back(reshape(target_i, {1, H, W, 3}));
        target_parts.push_back(reshape(target_i, {1, H, W, 3}));
        validity.push_back(std::move(w_prev.validity));
        validity.push_back(std::move(w_next.validity));
    }
    Tensor synth = concat(synth_parts, 0);
    Tensor target_rep = concat(target_parts, 0);

    std::vector<uint8_t> region_mask;
    const std::vector<uint8_t>* region_ptr = nullptr;
    if (cfg.loss_region == LossRegion::masked_only) {
        if (!mask_depth) {
            throw std::invalid_argument(
                "loss_region=masked_only requires depth-network masking");
        }
        region_mask.reserve(static_cast<size_t>(B * H * W));
        for (int64_t i = 0; i < B; ++i) {
            const auto px = depth_masks[i].to_pixel_mask(static_cast<int>(H), static_cast<int>(W));
            region_mask.insert(region_mask.end(), px.begin(), px.end());
        }
        region_ptr = &region_mask;
    }

    BatchLoss loss;
    loss.photometric = photometric_term(synth, target_rep, validity, cfg.loss_weights,
                                        cfg.photometric_combine, region_ptr);
    Tensor disparity = div(Tensor::scalar(1.0), depth_out.depth);
    loss.smoothness = smoothness_loss(disparity, targets_b);
    loss.total = add(loss.photometric,
                     mul(Tensor::scalar(cfg.loss_weights.lambda_smooth), loss.smoothness));
    return loss;
}

TrainResult train(const TrainConfig& cfg) {
    if (cfg.dataset_dir.empty()) throw std::invalid_argument("train: dataset directory not set");
    Dataset dataset = Dataset::load(cfg.dataset_dir);
    return train(cfg, dataset);
}

TrainResult train(const TrainConfig& cfg_in, const Dataset& dataset) {
    TrainConfig cfg = cfg_in;
    cfg.vit.image_h = dataset.intrinsics().height;
    cfg.vit.image_w = dataset.intrinsics().width;
    cfg.validate();

    DepthNetwork depth_net(cfg.vit, derive_seed(cfg.seed, 0x0d));
    EgoMotionNetwork ego_net(cfg.vit, derive_seed(cfg.seed, 0x0e));

    std::vector<Tensor> params = depth_net.params().tensors();
    for (auto& t : ego_net.params().tensors()) params.push_back(t);
    AdamWOptions opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;
    opt.weight_decay = cfg.weight_decay;
    AdamW optimizer(params, opt);

    const int64_t n = dataset.n_triplets();
    const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

    auto epoch_order = [&](int epoch) {
        std::vector<int64_t> order(n);
        for (int64_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed(cfg.seed, 0xba7c, static_cast<uint64_t>(epoch)));
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = rng.uniform_int(0, i);
            std::swap(order[i], order[j]);
        }
        return order;
    };
    auto batch_at = [&](const std::vector<int64_t>& order, int64_t b) {
        const int64_t lo = b * cfg.batch_size;
        const int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n);
        return std::vector<int64_t>(order.begin() + lo, order.begin() + hi);
    };

    TrainResult result{RunRecord{}, std::move(depth_net), std::move(ego_net)};
    RunRecord& record = result.record;
    record.config_snapshot = serialize(cfg);

    {  // initial loss: the first batches of epoch 0, evaluated before any update
        const auto order = epoch_order(0);
        const int64_t probe = std::min<int64_t>(steps_per_epoch, 10);
        double acc = 0.0;
        for (int64_t b = 0; b < probe; ++b) {
            acc += batch_training_loss(cfg, dataset, result.depth, result.ego, batch_at(order, b), b)
                       .total.value();
        }
        record.initial_loss = acc / static_cast<double>(probe);
    }

    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr_now =
            epoch >= cfg.lr_decay_epoch ? cfg.lr / cfg.lr_decay_factor : cfg.lr;
        optimizer.set_lr(lr_now);
        const auto order = epoch_order(epoch);
        double sum_total = 0.0, sum_photo = 0.0, sum_smooth = 0.0;
        for (int64_t b = 0; b < steps_per_epoch; ++b, ++global_step) {
            BatchLoss loss;
            try {
                loss = batch_training_loss(cfg, dataset, result.depth, result.ego,
                                           batch_at(order, b), global_step);
                if (!std::isfinite(loss.total.value())) {
                    std::ostringstream os;
                    os << "non-finite loss: photometric=" << loss.photometric.value()
                       << " smoothness=" << loss.smoothness.value();
                    throw std::runtime_error(os.str());
                }
            } catch (const std::exception& e) {
                std::ostringstream os;
                os << "training aborted at step " << global_step << " (epoch " << epoch
                   << ", lr " << lr_now << "): " << e.what();
                throw std::runtime_error(os.str());
            }
            const double total = loss.total.value();
            loss.total.backward();
            optimizer.step();
            sum_total += total;
            sum_photo += loss.photometric.value();
            sum_smooth += loss.smoothness.value();
        }
        record.epoch_losses.push_back(sum_total / static_cast<double>(steps_per_epoch));
        record.epoch_photometric.push_back(sum_photo / static_cast<double>(steps_per_epoch));
        record.epoch_smoothness.push_back(sum_smooth / static_cast<double>(steps_per_epoch));
        record.epoch_lr.push_back(lr_now);
    }
    record.total_steps = global_step;
    record.final_loss = record.epoch_losses.empty() ? record.initial_loss
                                                    : record.epoch_losses.back();
    if (!cfg.checkpoint_path.empty()) {
        save_checkpoint(cfg.checkpoint_path, result.depth, result.ego);
        record.checkpoint_digest = file_digest(cfg.checkpoint_path);
    }
    return result;
}

}  // namespace maskdepth
