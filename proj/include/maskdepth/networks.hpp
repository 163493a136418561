#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maskdepth/geometry.hpp"
#include "maskdepth/masking.hpp"
#include "maskdepth/rng.hpp"
#include "maskdepth/tensor.hpp"

namespace maskdepth {

struct ViTConfig {
    int patch_edge = 8;
    int width = 64;
    int layers = 4;
    int heads = 4;
    double mlp_ratio = 2.0;
    int image_h = 64;
    int image_w = 64;

    double d_min = 0.1;
    double d_max = 100.0;
    double pose_scale = 0.01;
    double init_std = 0.02;
    double pos_embed_std = 0.2;
    double mask_token_std = 0.02;
    bool per_position_mask_tokens = false;

    void validate() const;
    int64_t grid_h() const { return image_h / patch_edge; }
    int64_t grid_w() const { return image_w / patch_edge; }
    int64_t n_tokens() const { return grid_h() * grid_w(); }
    int64_t mlp_hidden() const { return static_cast<int64_t>(width * mlp_ratio); }
};

/// Named parameter registry with deterministic ordering; the unit the
/// optimizer and the checkpoint format operate on.
class ParamStore {
public:
    Tensor add(const std::string& name, Shape shape, std::vector<double> init);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    int64_t parameter_count() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Pre-norm transformer blocks (attention + MLP with residuals), no final
/// norm. Shape-preserving over [B, N, width]. When `attention_maps` is given,
/// each layer's post-softmax attention [B*heads, N, N] is appended.
Tensor transformer_encoder(const Tensor& tokens, const ParamStore& params,
                           const std::string& prefix, const ViTConfig& cfg,
                           std::vector<Tensor>* attention_maps = nullptr);

/// Non-overlapping patches, flattened and linearly projected: [B,H,W,C] ->
/// [B*N, width]. Position embeddings are NOT added here; masking happens
/// between projection and the position add.
Tensor patch_embed(const Tensor& images, const Tensor& proj_w, const Tensor& proj_b,
                   const ViTConfig& cfg);

class DepthNetwork {
public:
    DepthNetwork(const ViTConfig& cfg, uint64_t seed);

    struct Output {
        Tensor disparity;  // [B,H,W] in (0,1)
        Tensor depth;      // [B,H,W] in [d_min, d_max]
    };

    /// `masks`: one patch-resolution grid per batch item, or empty for no
    /// masking.
    Output forward(const Tensor& images, const std::vector<MaskGrid>& masks = {}) const;

    Tensor tokens_entering_encoder(const Tensor& images,
                                   const std::vector<MaskGrid>& masks = {}) const;

    const ViTConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const MaskToken& mask_token() const { return mask_token_; }

private:
    ViTConfig cfg_;
    ParamStore params_;
    MaskToken mask_token_;
};

class EgoMotionNetwork {
public:
    EgoMotionNetwork(const ViTConfig& cfg, uint64_t seed);

    /// pairs: [B, H, W, 6] channel-concatenated image pairs -> [B, 6] pose
    /// parameters (axis-angle, translation), scaled by cfg.pose_scale.
    Tensor forward(const Tensor& pairs, const std::vector<MaskGrid>& masks = {}) const;

    /// Slices one item's prediction into a Pose.
    static Pose pose_from_output(const Tensor& output, int64_t item);

    const ViTConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    ViTConfig cfg_;
    ParamStore params_;
    MaskToken mask_token_;
};

/// Joint model checkpoint. Little-endian binary: magic "MIMD", version u32,
/// config block (u32 byte count + key=value lines), u32 record count, then
/// per record: u32 name length, name bytes, u32 rank, u64 extents, f64 data.
void save_checkpoint(const std::string& path, const DepthNetwork& depth,
                     const EgoMotionNetwork& ego);
std::pair<DepthNetwork, EgoMotionNetwork> load_checkpoint(const std::string& path);

/// FNV-1a over the file bytes, hex-encoded.
std::string file_digest(const std::string& path);

}  // namespace maskdepth
