#include "maskdepth/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace maskdepth {

namespace {
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kInvalidPenalty = 1e6;
}  // namespace

void LossWeights::validate() const {
    if (lambda_ssim < 0.0 || lambda_l1 < 0.0 || lambda_smooth < 0.0) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
    if (lambda_ssim + lambda_l1 <= 0.0) {
        throw std::invalid_argument("photometric weights must not both be zero");
    }
}

Tensor box_filter(const Tensor& img, int window) {
    if (window < 1 || window % 2 == 0) {
        throw std::invalid_argument("box_filter window must be odd and positive");
    }
    const int rank = static_cast<int>(img.shape().size());
    if (rank < 3) {
        throw std::invalid_argument("box_filter expects [..., H, W, C], got " +
                                    shape_str(img.shape()));
    }
    const int h_axis = rank - 3;
    const int w_axis = rank - 2;
    const int radius = window / 2;
    auto smooth_axis = [&](const Tensor& t, int axis) {
        Tensor acc = t;
        for (int off = 1; off <= radius; ++off) {
            acc = add(acc, add(shift(t, axis, off), shift(t, axis, -off)));
        }
        return div(acc, Tensor::scalar(static_cast<double>(window)));
    };
    return smooth_axis(smooth_axis(img, h_axis), w_axis);
}

Tensor ssim_map(const Tensor& a, const Tensor& b, int window) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Tensor mu_a = box_filter(a, window);
    Tensor mu_b = box_filter(b, window);
    Tensor ea = box_filter(mul(a, a), window);
    Tensor eb = box_filter(mul(b, b), window);
    Tensor eab = box_filter(mul(a, b), window);
    Tensor var_a = sub(ea, mul(mu_a, mu_a));
    Tensor var_b = sub(eb, mul(mu_b, mu_b));
    Tensor cov = sub(eab, mul(mu_a, mu_b));

    Tensor num = mul(add(mul(Tensor::scalar(2.0), mul(mu_a, mu_b)), Tensor::scalar(kC1)),
                     add(mul(Tensor::scalar(2.0), cov), Tensor::scalar(kC2)));
    Tensor den = mul(add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), Tensor::scalar(kC1)),
                     add(add(var_a, var_b), Tensor::scalar(kC2)));
    Tensor ssim = div(num, den);
    const int c_axis = static_cast<int>(a.shape().size()) - 1;
    Tensor per_pixel = mean(div(sub(Tensor::scalar(1.0), ssim), Tensor::scalar(2.0)), {c_axis});
    return per_pixel;
}

Tensor ssim_loss(const Tensor& a, const Tensor& b, int window) {
    return mean(ssim_map(a, b, window));
}

Tensor l1_map(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("l1: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    const int c_axis = static_cast<int>(a.shape().size()) - 1;
    return mean(abs(sub(a, b)), {c_axis});
}

namespace {

Tensor masked_mean(const Tensor& per_pixel, const std::vector<uint8_t>& mask) {
    if (static_cast<int64_t>(mask.size()) != per_pixel.numel()) {
        throw std::invalid_argument("validity mask size mismatch");
    }
    int64_t count = 0;
    std::vector<double> weights(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        weights[i] = mask[i] ? 1.0 : 0.0;
        count += mask[i] ? 1 : 0;
    }
    if (count == 0) throw std::invalid_argument("empty validity mask");
    Tensor w = Tensor::from_data(per_pixel.shape(), std::move(weights));
    return div(sum(mul(per_pixel, w)), Tensor::scalar(static_cast<double>(count)));
}

}  // namespace

Tensor l1_photometric(const Tensor& a, const Tensor& b, const std::vector<uint8_t>& validity) {
    return masked_mean(l1_map(a, b), validity);
}

Tensor smoothness_loss(const Tensor& disparity, const Tensor& target) {
    const int drank = static_cast<int>(disparity.shape().size());
    const int trank = static_cast<int>(target.shape().size());
    if (trank != drank + 1) {
        throw std::invalid_argument("smoothness: disparity " + shape_str(disparity.shape()) +
                                    " does not match image " + shape_str(target.shape()));
    }
    for (int i = 0; i < drank; ++i) {
        if (disparity.shape()[i] != target.shape()[i]) {
            throw std::invalid_argument("smoothness: spatial shape mismatch");
        }
    }
    const int dy_axis = drank - 2;
    const int dx_axis = drank - 1;
    std::vector<int> spatial_axes{dy_axis, dx_axis};

    Tensor d_mean = mean(disparity, spatial_axes, true);
    for (int64_t i = 0; i < d_mean.numel(); ++i) {
        if (d_mean.at(i) == 0.0) {
            throw std::domain_error("smoothness: disparity mean is zero");
        }
    }
    Tensor norm = div(disparity, d_mean);

    auto grad_mag = [](const Tensor& t, int axis) { return abs(sub(shift(t, axis, 1), t)); };

    Tensor dx_d = grad_mag(norm, dx_axis);
    Tensor dy_d = grad_mag(norm, dy_axis);
    // image gradients averaged over channels, axes offset by the channel dim
    const int iy_axis = trank - 3;
    const int ix_axis = trank - 2;
    Tensor gx = mean(grad_mag(target, ix_axis), {trank - 1});
    Tensor gy = mean(grad_mag(target, iy_axis), {trank - 1});

    Tensor term = add(mul(dx_d, exp(neg(gx))), mul(dy_d, exp(neg(gy))));
    return mean(term);
}

Tensor photometric_term(const Tensor& synth, const Tensor& target,
                        const std::vector<std::vector<uint8_t>>& validity,
                        const LossWeights& weights, PhotometricCombine combine,
                        const std::vector<uint8_t>* region_mask) {
    weights.validate();
    const auto& shp = synth.shape();
    if (shp.size() != 4 || target.shape() != shp) {
        throw std::invalid_argument("photometric_term expects matching [S,H,W,C] stacks");
    }
    const int64_t S = shp[0];
    if (S % 2 != 0 || static_cast<int64_t>(validity.size()) != S) {
        throw std::invalid_argument("photometric_term needs a source pair per item");
    }
    const int64_t B = S / 2;
    const int64_t H = shp[1];
    const int64_t W = shp[2];
    const int64_t n_px = H * W;

    Tensor pm = add(mul(Tensor::scalar(weights.lambda_ssim), ssim_map(synth, target)),
                    mul(Tensor::scalar(weights.lambda_l1), l1_map(synth, target)));  // [S,H,W]

    std::vector<double> vmask(static_cast<size_t>(S * n_px));
    for (int64_t s = 0; s < S; ++s) {
        if (static_cast<int64_t>(validity[s].size()) != n_px) {
            throw std::invalid_argument("photometric_term validity size mismatch");
        }
        for (int64_t i = 0; i < n_px; ++i) {
            vmask[s * n_px + i] = validity[s][i] ? 1.0 : 0.0;
        }
    }
    Tensor va = Tensor::from_data({S, H, W}, vmask);

    Tensor combined;                // [B, H, W] per-pixel photometric
    std::vector<uint8_t> covered(static_cast<size_t>(B * n_px));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i < n_px; ++i) {
            covered[b * n_px + i] =
                (validity[2 * b][i] || validity[2 * b + 1][i]) ? 1 : 0;
        }
    }
    if (combine == PhotometricCombine::min) {
        Tensor pm_pen = add(mul(pm, va),
                            mul(sub(Tensor::scalar(1.0), va), Tensor::scalar(kInvalidPenalty)));
        Tensor pairs = reshape(pm_pen, {B, 2, H, W});
        combined = reshape(min_pair(slice(pairs, 1, 0, 1), slice(pairs, 1, 1, 2)), {B, H, W});
    } else {
        Tensor weighted = reshape(mul(pm, va), {B, 2, H, W});
        Tensor sum_pm = reshape(add(slice(weighted, 1, 0, 1), slice(weighted, 1, 1, 2)),
                                {B, H, W});
        Tensor counts = reshape(va, {B, 2, H, W});
        Tensor denom = reshape(add(slice(counts, 1, 0, 1), slice(counts, 1, 1, 2)), {B, H, W});
        combined = div(sum_pm, max_pair(denom, Tensor::full({1}, 1.0)));
    }

    std::vector<uint8_t> final_mask = covered;
    if (region_mask) {
        if (region_mask->size() != covered.size()) {
            throw std::invalid_argument("loss region mask size mismatch");
        }
        for (size_t i = 0; i < final_mask.size(); ++i) {
            final_mask[i] = final_mask[i] && (*region_mask)[i];
        }
    }
    return masked_mean(combined, final_mask);
}

DepthLossResult depth_loss(const Tensor& target, const Tensor& source_prev,
                           const Tensor& source_next, const Tensor& depth,
                           const Pose& pose_to_prev, const Pose& pose_to_next,
                           const Intrinsics& K, const LossWeights& weights,
                           LossRegion region, const MaskGrid* mask,
                           PhotometricCombine combine) {
    if (region == LossRegion::masked_only && mask == nullptr) {
        throw std::invalid_argument("loss_region=masked_only requires a mask grid");
    }
    WarpResult w_prev = synthesize_target(source_prev, depth, pose_to_prev, K);
    WarpResult w_next = synthesize_target(source_next, depth, pose_to_next, K);

    const int64_t H = K.height, W = K.width;
    Tensor synth = concat({reshape(w_prev.image, {1, H, W, 3}), reshape(w_next.image, {1, H, W, 3})}, 0);
    Tensor tgt = concat({reshape(target, {1, H, W, 3}), reshape(target, {1, H, W, 3})}, 0);

    std::vector<uint8_t> region_px;
    const std::vector<uint8_t>* region_ptr = nullptr;
    if (region == LossRegion::masked_only) {
        region_px = mask->to_pixel_mask(static_cast<int>(H), static_cast<int>(W));
        region_ptr = &region_px;
    }
    DepthLossResult out;
    out.photometric = photometric_term(synth, tgt, {w_prev.validity, w_next.validity}, weights,
                                       combine, region_ptr);
    Tensor disparity = div(Tensor::scalar(1.0), depth);
    out.smoothness = smoothness_loss(disparity, target);
    out.total = add(out.photometric, mul(Tensor::scalar(weights.lambda_smooth), out.smoothness));
    return out;
}

}  // namespace maskdepth
