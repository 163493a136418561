#pragma once

#include <cstdint>
#include <vector>

#include "maskdepth/geometry.hpp"
#include "maskdepth/masking.hpp"
#include "maskdepth/tensor.hpp"

namespace maskdepth {

struct LossWeights {
    double lambda_ssim = 0.85;
    double lambda_l1 = 0.15;
    double lambda_smooth = 1e-3;

    void validate() const;
};

enum class LossRegion { complete, masked_only };
enum class PhotometricCombine { min, mean };

inline constexpr int kSsimWindow = 3;

/// Edge-replicated window x window box mean over the two spatial axes of a
/// [..., H, W, C] image.
Tensor box_filter(const Tensor& img, int window);

/// Per-pixel (1 - SSIM)/2 averaged over channels: [..., H, W].
/// C1 = 0.01^2, C2 = 0.03^2 on the [0,1] dynamic range.
Tensor ssim_map(const Tensor& a, const Tensor& b, int window = kSsimWindow);

Tensor ssim_loss(const Tensor& a, const Tensor& b, int window = kSsimWindow);

/// Mean |a - b| per pixel (over channels): [..., H, W].
Tensor l1_map(const Tensor& a, const Tensor& b);

/// Mean absolute difference over valid pixels only.
Tensor l1_photometric(const Tensor& a, const Tensor& b, const std::vector<uint8_t>& validity);

/// Edge-aware disparity smoothness with mean-normalized disparity.
Tensor smoothness_loss(const Tensor& disparity, const Tensor& target);

struct DepthLossResult {
    Tensor total;
    Tensor photometric;
    Tensor smoothness;
};

/// The training objective: per-pixel SSIM+L1 against both warped sources,
/// combined pixelwise (min by default), plus weighted smoothness.
DepthLossResult depth_loss(const Tensor& target, const Tensor& source_prev,
                           const Tensor& source_next, const Tensor& depth,
                           const Pose& pose_to_prev, const Pose& pose_to_next,
                           const Intrinsics& K, const LossWeights& weights,
                           LossRegion region = LossRegion::complete,
                           const MaskGrid* mask = nullptr,
                           PhotometricCombine combine = PhotometricCombine::min);

/// Batched core used by the trainer. `synth` holds one warped image per
/// (item, source) in item-major order; `target` repeats each item's frame to
/// match. Per-pixel terms are combined across each item's source pair.
Tensor photometric_term(const Tensor& synth, const Tensor& target,
                        const std::vector<std::vector<uint8_t>>& validity,
                        const LossWeights& weights, PhotometricCombine combine,
                        const std::vector<uint8_t>* region_mask);

}  // namespace maskdepth
