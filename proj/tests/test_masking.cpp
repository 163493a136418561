#include <doctest.h>

#include <cmath>

#include "maskdepth/masking.hpp"
#include "maskdepth/rng.hpp"
#include "testutil.hpp"

using namespace maskdepth;
using testutil::random_tensor;

namespace {
MaskConfig paper_defaults(uint64_t seed) {
    MaskConfig cfg;
    cfg.mask_size = 16;
    cfg.mask_ratio = 0.25;
    cfg.aspect = 0.3;
    cfg.seed = seed;
    return cfg;
}
}  // namespace

TEST_CASE("blockwise mask covers the target ratio with bounded overshoot") {
    // 192x640 with 16px cells -> 12x40 grid, 480 cells, target 120
    for (uint64_t seed = 0; seed < 50; ++seed) {
        MaskGrid grid = blockwise_mask(paper_defaults(seed), 192, 640);
        CHECK(grid.gh == 12);
        CHECK(grid.gw == 40);
        const int64_t m = grid.masked_count();
        CHECK(m >= 120);
        CHECK(m <= 120 + 64);
        CHECK(grid.achieved_ratio == doctest::Approx(m / 480.0));
    }
}

TEST_CASE("blockwise achieved ratio statistics over 1000 seeds") {
    double sum_ratio = 0.0;
    const int n_seeds = 1000;
    for (uint64_t seed = 0; seed < n_seeds; ++seed) {
        MaskGrid grid = blockwise_mask(paper_defaults(seed), 192, 640);
        CHECK(grid.achieved_ratio >= 0.25);
        CHECK(grid.achieved_ratio <= 0.25 + 64.0 / 480.0);
        sum_ratio += grid.achieved_ratio;
    }
    const double mean_ratio = sum_ratio / n_seeds;
    CHECK(mean_ratio >= 0.25);
    CHECK(mean_ratio <= 0.27);
}

TEST_CASE("block aspect ratios stay in the configured range") {
    for (uint64_t seed = 0; seed < 200; ++seed) {
        MaskGrid grid = blockwise_mask(paper_defaults(seed), 192, 640);
        for (const auto& blk : grid.blocks) {
            CHECK(blk.sampled_aspect >= 0.3);
            CHECK(blk.sampled_aspect <= 1.0 / 0.3);
        }
    }
}

TEST_CASE("masked cells are covered by placed rectangles of minimum area") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        MaskGrid grid = blockwise_mask(paper_defaults(seed), 192, 640);
        std::vector<uint8_t> unioned(grid.cells.size(), 0);
        for (const auto& blk : grid.blocks) {
            CHECK(blk.h * blk.w >= kMinBlockCells);
            for (int64_t y = blk.y; y < blk.y + blk.h; ++y) {
                for (int64_t x = blk.x; x < blk.x + blk.w; ++x) {
                    unioned[y * grid.gw + x] = 1;
                }
            }
        }
        CHECK(unioned == grid.cells);
    }
}

TEST_CASE("degenerate one-cell target terminates") {
    MaskConfig cfg;
    cfg.mask_size = 8;
    cfg.mask_ratio = 0.01;  // target rounds up to 1 cell on a 2x2 grid
    cfg.aspect = 0.5;
    cfg.seed = 3;
    MaskGrid grid = blockwise_mask(cfg, 16, 16);
    CHECK(grid.masked_count() >= 1);

    MaskGrid rnd = random_mask(cfg, 16, 16);
    CHECK(rnd.masked_count() == 1);
}

TEST_CASE("mask generation is deterministic in the seed") {
    MaskGrid a = blockwise_mask(paper_defaults(42), 192, 640);
    MaskGrid b = blockwise_mask(paper_defaults(42), 192, 640);
    CHECK(a.cells == b.cells);
    MaskGrid c = blockwise_mask(paper_defaults(43), 192, 640);
    CHECK(a.cells != c.cells);

    MaskGrid ra = random_mask(paper_defaults(7), 192, 640);
    MaskGrid rb = random_mask(paper_defaults(7), 192, 640);
    CHECK(ra.cells == rb.cells);
}

TEST_CASE("unsatisfiable config throws") {
    MaskConfig cfg;
    cfg.mask_size = 64;
    cfg.mask_ratio = 0.25;
    cfg.aspect = 0.3;
    CHECK_THROWS_AS(blockwise_mask(cfg, 32, 32), std::invalid_argument);
    cfg.mask_ratio = 1.5;
    CHECK_THROWS_AS(blockwise_mask(cfg, 256, 256), std::invalid_argument);
}

TEST_CASE("random mask hits the exact count and uniform marginals") {
    MaskGrid grid = random_mask(paper_defaults(0), 192, 640);
    CHECK(grid.masked_count() == 120);

    // Per-cell marginal over many seeds. At 10k seeds a 0.01 bound is only
    // 2.3 sigma and a few of the 480 cells fail by chance; 40k makes it 4.6.
    const int n_seeds = 40000;
    MaskConfig cfg = paper_defaults(0);
    std::vector<int> hits(480, 0);
    for (int seed = 0; seed < n_seeds; ++seed) {
        cfg.seed = static_cast<uint64_t>(seed);
        MaskGrid g = random_mask(cfg, 192, 640);
        for (size_t i = 0; i < g.cells.size(); ++i) hits[i] += g.cells[i];
    }
    for (int i = 0; i < 480; ++i) {
        const double p = static_cast<double>(hits[i]) / n_seeds;
        CHECK(std::abs(p - 0.25) < 0.01);
    }
}

TEST_CASE("repeat_to doubles the grid for coarse mask cells") {
    MaskConfig cfg;
    cfg.mask_size = 16;
    cfg.mask_ratio = 0.25;
    cfg.aspect = 0.3;
    cfg.seed = 5;
    MaskGrid coarse = blockwise_mask(cfg, 64, 64);  // 4x4 cells
    MaskGrid fine = coarse.repeat_to(8, 8);
    CHECK(fine.gh == 8);
    CHECK(fine.gw == 8);
    for (int64_t y = 0; y < 8; ++y) {
        for (int64_t x = 0; x < 8; ++x) {
            CHECK(fine.at(y, x) == coarse.at(y / 2, x / 2));
        }
    }
    CHECK_THROWS_AS(coarse.repeat_to(9, 9), std::invalid_argument);
}

TEST_CASE("apply_mask identity on the empty grid and full substitution") {
    Rng rng(71);
    const int64_t n = 16, width = 8;
    Tensor tokens = random_tensor(rng, {n, width}, true);
    MaskToken token = MaskToken::create(width, 0.02, rng);

    MaskGrid empty;
    empty.gh = 4;
    empty.gw = 4;
    empty.mask_size = 8;
    empty.cells.assign(16, 0);
    Tensor same = apply_mask(tokens, empty, token);
    for (int64_t i = 0; i < tokens.numel(); ++i) CHECK(same.at(i) == tokens.at(i));

    MaskGrid full = empty;
    full.cells.assign(16, 1);
    Tensor replaced = apply_mask(tokens, full, token);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t c = 0; c < width; ++c) {
            CHECK(replaced.at(i * width + c) == token.embedding.at(c));
        }
    }
}

TEST_CASE("mask embedding receives gradient when patches are masked") {
    Rng rng(73);
    const int64_t n = 16, width = 8;
    Tensor tokens = random_tensor(rng, {n, width}, true);
    MaskToken token = MaskToken::create(width, 0.02, rng);
    MaskGrid grid;
    grid.gh = 4;
    grid.gw = 4;
    grid.mask_size = 8;
    grid.cells.assign(16, 0);
    grid.cells[3] = grid.cells[7] = 1;

    Tensor out = apply_mask(tokens, grid, token);
    sum(mul(out, out)).backward();
    double embed_grad_norm = 0.0;
    for (double g : token.embedding.grad()) embed_grad_norm += g * g;
    CHECK(embed_grad_norm > 0.0);
    // unmasked rows keep their token gradient, masked rows route to the embedding
    for (int64_t c = 0; c < width; ++c) {
        CHECK(tokens.grad()[3 * width + c] == 0.0);
        CHECK(tokens.grad()[0 * width + c] != 0.0);
    }

    CHECK_THROWS_AS(apply_mask(random_tensor(rng, {9, width}), grid, token),
                    std::invalid_argument);
}

TEST_CASE("per position mask tokens substitute by position") {
    Rng rng(79);
    const int64_t n = 4, width = 3;
    Tensor tokens = random_tensor(rng, {n, width}, false);
    MaskToken token = MaskToken::create(width, 0.02, rng, true, n);
    MaskGrid grid;
    grid.gh = 2;
    grid.gw = 2;
    grid.mask_size = 8;
    grid.cells = {1, 0, 0, 1};
    Tensor out = apply_mask(tokens, grid, token);
    for (int64_t c = 0; c < width; ++c) {
        CHECK(out.at(0 * width + c) == token.embedding.at(0 * width + c));
        CHECK(out.at(1 * width + c) == tokens.at(1 * width + c));
        CHECK(out.at(3 * width + c) == token.embedding.at(3 * width + c));
    }
}
