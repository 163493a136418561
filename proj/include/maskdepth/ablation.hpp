#pragma once

#include <string>
#include <vector>

#include "maskdepth/evaluate.hpp"
#include "maskdepth/trainer.hpp"

namespace maskdepth {

/// One configuration arm of the masking ablation.
struct AblationArm {
    std::string name;
    MaskTarget mask_target = MaskTarget::depth_only;
    MaskStrategy depth_strategy = MaskStrategy::blockwise;
    MaskStrategy ego_strategy = MaskStrategy::blockwise;
    int mask_size = 8;
    double mask_ratio = 0.25;
    LossRegion loss_region = LossRegion::complete;

    TrainConfig configure(const TrainConfig& base) const;
};

/// The four strategy arms and the four size/ratio/loss-target arms share
/// their first row, seven distinct runs in total. `mask_size` is the
/// transformer patch edge for the default arms and twice that for the
/// coarse-mask arm.
std::vector<AblationArm> default_ablation_arms(int patch_edge);

struct AblationCell {
    std::string arm;
    double clean_rmse = 0.0;
    double blockwise_rmse = 0.0;
    double random_rmse = 0.0;
    double mean_rmse = 0.0;
    std::vector<double> per_seed_clean;  // retained per-seed values
    std::vector<RunRecord> runs;
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::vector<uint64_t> seeds;

    /// Arms ordered by mean clean+occlusion RMSE, best first.
    std::vector<std::string> ranking() const;
    std::string render_table() const;
};

using TrainFn = std::function<TrainResult(const TrainConfig&)>;

/// Trains every arm with every seed, evaluates clean and both occlusion
/// protocols on the eval dataset, and tabulates mean RMSE per cell.
/// `trainer` lets callers inject a caching run provider; by default each
/// (arm, seed) trains from scratch on train_data.
AblationReport ablation_grid(const TrainConfig& base, const std::vector<AblationArm>& arms,
                             const std::vector<uint64_t>& seeds, const Dataset& train_data,
                             const Dataset& eval_data, bool verbose = false,
                             const TrainFn& trainer = {},
                             const EvalOptions& eval_options = {});

}  // namespace maskdepth
