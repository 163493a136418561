#include "maskdepth/masking.hpp"

#include <algorithm>
#include <string>
#include <cmath>
#include <stdexcept>

namespace maskdepth {

void MaskConfig::validate() const {
    if (mask_size < 1) throw std::invalid_argument("mask_size must be >= 1 pixel");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw std::invalid_argument("mask_ratio must lie in (0,1)");
    }
    if (!(aspect > 0.0 && aspect < 1.0)) {
        throw std::invalid_argument("aspect must lie in (0,1)");
    }
}

std::string to_string(MaskStrategy strategy) {
    return strategy == MaskStrategy::blockwise ? "blockwise" : "random";
}

MaskStrategy mask_strategy_from_string(const std::string& name) {
    if (name == "blockwise") return MaskStrategy::blockwise;
    if (name == "random") return MaskStrategy::random;
    throw std::invalid_argument("unknown mask strategy: " + name);
}

int64_t MaskGrid::masked_count() const {
    int64_t c = 0;
    for (uint8_t v : cells) c += v;
    return c;
}

MaskGrid MaskGrid::repeat_to(int64_t target_gh, int64_t target_gw) const {
    if (target_gh % gh != 0 || target_gw % gw != 0) {
        throw std::invalid_argument("repeat_to target grid must be a multiple of the mask grid");
    }
    const int64_t fy = target_gh / gh;
    const int64_t fx = target_gw / gw;
    MaskGrid out;
    out.gh = target_gh;
    out.gw = target_gw;
    out.mask_size = static_cast<int>(mask_size / std::max<int64_t>(fy, 1));
    out.achieved_ratio = achieved_ratio;
    out.blocks = blocks;
    out.cells.resize(static_cast<size_t>(target_gh * target_gw));
    for (int64_t y = 0; y < target_gh; ++y) {
        for (int64_t x = 0; x < target_gw; ++x) {
            out.cells[y * target_gw + x] = cells[(y / fy) * gw + (x / fx)];
        }
    }
    return out;
}

std::vector<uint8_t> MaskGrid::to_pixel_mask(int h, int w) const {
    std::vector<uint8_t> px(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y) {
        const int64_t gy = y / mask_size;
        if (gy >= gh) continue;
        for (int x = 0; x < w; ++x) {
            const int64_t gx = x / mask_size;
            if (gx >= gw) continue;
            px[static_cast<size_t>(y) * w + x] = cells[gy * gw + gx];
        }
    }
    return px;
}

namespace {

struct GridDims {
    int64_t gh, gw, n;
    double target;
};

GridDims grid_dims(const MaskConfig& cfg, int h, int w) {
    cfg.validate();
    GridDims d;
    d.gh = h / cfg.mask_size;
    d.gw = w / cfg.mask_size;
    if (d.gh < 1 || d.gw < 1) {
        throw std::invalid_argument("mask config unsatisfiable: cell size " +
                                    std::to_string(cfg.mask_size) + " exceeds image " +
                                    std::to_string(w) + "x" + std::to_string(h));
    }
    d.n = d.gh * d.gw;
    d.target = std::max(1.0, cfg.mask_ratio * static_cast<double>(d.n));
    return d;
}

}  // namespace

MaskGrid blockwise_mask(const MaskConfig& cfg, int h, int w) {
    const GridDims d = grid_dims(cfg, h, w);
    MaskGrid grid;
    grid.gh = d.gh;
    grid.gw = d.gw;
    grid.mask_size = cfg.mask_size;
    grid.cells.assign(static_cast<size_t>(d.n), 0);

    Rng rng(cfg.seed);
    int64_t covered = 0;
    const int64_t min_area = std::min(kMinBlockCells, d.n);
    while (covered < d.target) {
        const double budget = d.target - static_cast<double>(covered);
        const int64_t s_hi = std::max(min_area, static_cast<int64_t>(std::floor(budget)));
        const int64_t s = rng.uniform_int(min_area, s_hi);
        const double r = rng.uniform(cfg.aspect, 1.0 / cfg.aspect);
        int64_t bh = std::llround(std::sqrt(static_cast<double>(s) * r));
        int64_t bw = std::llround(std::sqrt(static_cast<double>(s) / r));
        bh = std::clamp<int64_t>(bh, 1, d.gh);
        bw = std::clamp<int64_t>(bw, 1, d.gw);
        // rounding may shrink the area below the minimum; widen the smaller side
        while (bh * bw < std::min<int64_t>(s, min_area)) {
            if (bh <= bw && bh < d.gh) {
                ++bh;
            } else if (bw < d.gw) {
                ++bw;
            } else if (bh < d.gh) {
                ++bh;
            } else {
                break;
            }
        }
        const int64_t y = rng.uniform_int(0, d.gh - bh);
        const int64_t x = rng.uniform_int(0, d.gw - bw);
        for (int64_t yy = y; yy < y + bh; ++yy) {
            for (int64_t xx = x; xx < x + bw; ++xx) {
                uint8_t& cell = grid.cells[yy * d.gw + xx];
                if (!cell) {
                    cell = 1;
                    ++covered;
                }
            }
        }
        grid.blocks.push_back({y, x, bh, bw, s, r});
    }
    grid.achieved_ratio = static_cast<double>(covered) / static_cast<double>(d.n);
    return grid;
}

MaskGrid random_mask(const MaskConfig& cfg, int h, int w) {
    const GridDims d = grid_dims(cfg, h, w);
    MaskGrid grid;
    grid.gh = d.gh;
    grid.gw = d.gw;
    grid.mask_size = cfg.mask_size;
    grid.cells.assign(static_cast<size_t>(d.n), 0);

    const int64_t count =
        std::max<int64_t>(1, std::llround(cfg.mask_ratio * static_cast<double>(d.n)));
    // partial Fisher-Yates over cell indices
    std::vector<int64_t> idx(static_cast<size_t>(d.n));
    for (int64_t i = 0; i < d.n; ++i) idx[i] = i;
    Rng rng(cfg.seed);
    for (int64_t i = 0; i < count; ++i) {
        const int64_t j = rng.uniform_int(i, d.n - 1);
        std::swap(idx[i], idx[j]);
        grid.cells[idx[i]] = 1;
    }
    grid.achieved_ratio = static_cast<double>(count) / static_cast<double>(d.n);
    return grid;
}

MaskToken MaskToken::create(int width, double init_scale, Rng& rng, bool per_position,
                            int64_t n_positions) {
    MaskToken token;
    token.init_scale = init_scale;
    Shape shape = per_position ? Shape{n_positions, width} : Shape{width};
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = rng.gaussian(0.0, init_scale);
    token.embedding = Tensor::from_data(std::move(shape), std::move(data), true);
    return token;
}

Tensor apply_mask_rows(const Tensor& tokens, const std::vector<uint8_t>& row_mask,
                       const Tensor& embedding, int64_t positions_period) {
    const auto& tshape = tokens.shape();
    if (tshape.size() != 2) {
        throw std::invalid_argument("apply_mask expects [rows, width] tokens, got " +
                                    shape_str(tshape));
    }
    const int64_t rows = tshape[0];
    const int64_t width = tshape[1];
    if (static_cast<int64_t>(row_mask.size()) != rows) {
        throw std::invalid_argument("mask length " + std::to_string(row_mask.size()) +
                                    " does not match token rows " + std::to_string(rows));
    }
    const bool per_position = embedding.shape().size() == 2;
    if (per_position) {
        if (embedding.shape()[1] != width || embedding.shape()[0] != positions_period) {
            throw std::invalid_argument("per-position mask embedding shape mismatch");
        }
    } else if (embedding.numel() != width) {
        throw std::invalid_argument("mask embedding width mismatch");
    }

    auto tn = tokens.node();
    auto en = embedding.node();
    std::vector<double> out(tn->data);
    const double* pe = en->data.data();
    for (int64_t i = 0; i < rows; ++i) {
        if (!row_mask[i]) continue;
        const double* src = per_position ? pe + (i % positions_period) * width : pe;
        std::copy(src, src + width, out.begin() + i * width);
    }
    auto mask_copy = std::make_shared<std::vector<uint8_t>>(row_mask);
    return Tensor(autograd::make_node(
        tshape, std::move(out), {tn, en},
        [tn, en, mask_copy, rows, width, per_position, positions_period](autograd::Node& self) {
            const double* g = self.grad.data();
            double* gt = tn->requires_grad ? tn->ensure_grad().data() : nullptr;
            double* ge = en->requires_grad ? en->ensure_grad().data() : nullptr;
            for (int64_t i = 0; i < rows; ++i) {
                if ((*mask_copy)[i]) {
                    if (ge) {
                        double* dst = per_position ? ge + (i % positions_period) * width : ge;
                        const double* src = g + i * width;
                        for (int64_t c = 0; c < width; ++c) dst[c] += src[c];
                    }
                } else if (gt) {
                    const double* src = g + i * width;
                    double* dst = gt + i * width;
                    for (int64_t c = 0; c < width; ++c) dst[c] += src[c];
                }
            }
        }));
}

Tensor apply_mask(const Tensor& tokens, const MaskGrid& grid, const MaskToken& token) {
    const int64_t n_tokens = tokens.shape().size() == 2 ? tokens.shape()[0] : -1;
    if (grid.gh * grid.gw != n_tokens) {
        throw std::invalid_argument("mask grid " + std::to_string(grid.gh) + "x" +
                                    std::to_string(grid.gw) + " does not match token count " +
                                    std::to_string(n_tokens));
    }
    return apply_mask_rows(tokens, grid.cells, token.embedding, n_tokens);
}

}  // namespace maskdepth
