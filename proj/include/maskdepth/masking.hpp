#pragma once

#include <cstdint>
#include <vector>

#include "maskdepth/rng.hpp"
#include "maskdepth/tensor.hpp"

namespace maskdepth {

struct MaskConfig {
    int mask_size = 16;       // cell edge in pixels
    double mask_ratio = 0.25;
    double aspect = 0.3;      // blocks sample aspect in [aspect, 1/aspect]
    uint64_t seed = 0;

    void validate() const;
};

enum class MaskStrategy { blockwise, random };

std::string to_string(MaskStrategy strategy);
MaskStrategy mask_strategy_from_string(const std::string& name);

/// Smallest block area in cells placed by the blockwise generator.
inline constexpr int64_t kMinBlockCells = 4;

struct MaskBlock {
    int64_t y = 0, x = 0, h = 0, w = 0;
    int64_t sampled_area = 0;
    double sampled_aspect = 1.0;
};

struct MaskGrid {
    int64_t gh = 0, gw = 0;
    int mask_size = 0;
    std::vector<uint8_t> cells;  // gh*gw row-major, 1 = masked
    double achieved_ratio = 0.0;
    std::vector<MaskBlock> blocks;  // empty for random masking

    int64_t masked_count() const;
    bool at(int64_t gy, int64_t gx) const { return cells[gy * gw + gx] != 0; }

    /// Integer upsample so one mask cell covers several transformer patches.
    /// target extents must be multiples of gh/gw.
    MaskGrid repeat_to(int64_t target_gh, int64_t target_gw) const;

    /// Rasterize to pixel resolution; pixels outside the cell grid (floor
    /// remainder) stay unmasked.
    std::vector<uint8_t> to_pixel_mask(int h, int w) const;
};

/// Unions random rectangles of cells until mask_ratio of the grid is covered.
/// Deterministic given cfg.seed. The target count is rounded up to one cell.
MaskGrid blockwise_mask(const MaskConfig& cfg, int h, int w);

/// Exactly round(mask_ratio * cells) cells, at least one, without replacement.
MaskGrid random_mask(const MaskConfig& cfg, int h, int w);

struct MaskToken {
    Tensor embedding;  // [width] shared, or [n_positions, width]
    double init_scale = 0.02;

    static MaskToken create(int width, double init_scale, Rng& rng, bool per_position = false,
                            int64_t n_positions = 0);
};

/// Replaces masked token rows by the learnable embedding. Unmasked rows are
/// copied bit-identically; gradients route to the embedding from masked rows
/// only. grid cell count must equal the token count.
Tensor apply_mask(const Tensor& tokens, const MaskGrid& grid, const MaskToken& token);

/// Batched variant over stacked sequences: rows [B*n, width], row i maps to
/// position i % n for per-position embeddings.
Tensor apply_mask_rows(const Tensor& tokens, const std::vector<uint8_t>& row_mask,
                       const Tensor& embedding, int64_t positions_period);

}  // namespace maskdepth
