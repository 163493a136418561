#include "maskdepth/ablation.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <sstream>

namespace maskdepth {

TrainConfig AblationArm::configure(const TrainConfig& base) const {
    TrainConfig cfg = base;
    cfg.mask_target = mask_target;
    cfg.depth_mask_strategy = depth_strategy;
    cfg.ego_mask_strategy = ego_strategy;
    cfg.mask.mask_size = mask_size;
    cfg.mask.mask_ratio = mask_ratio;
    cfg.loss_region = loss_region;
    return cfg;
}

std::vector<AblationArm> default_ablation_arms(int patch_edge) {
    const int base = patch_edge;
    std::vector<AblationArm> arms;
    // strategy arms: depth/ego masking combinations
    arms.push_back({"B_depth", MaskTarget::depth_only, MaskStrategy::blockwise,
                    MaskStrategy::blockwise, base, 0.25, LossRegion::complete});
    arms.push_back({"R_depth", MaskTarget::depth_only, MaskStrategy::random,
                    MaskStrategy::blockwise, base, 0.25, LossRegion::complete});
    arms.push_back({"B_depth_B_ego", MaskTarget::both, MaskStrategy::blockwise,
                    MaskStrategy::blockwise, base, 0.25, LossRegion::complete});
    arms.push_back({"B_depth_R_ego", MaskTarget::both, MaskStrategy::blockwise,
                    MaskStrategy::random, base, 0.25, LossRegion::complete});
    // size / ratio / loss-target arms (the first of Table 2 equals B_depth)
    arms.push_back({"ratio40", MaskTarget::depth_only, MaskStrategy::blockwise,
                    MaskStrategy::blockwise, base, 0.40, LossRegion::complete});
    arms.push_back({"size2x", MaskTarget::depth_only, MaskStrategy::blockwise,
                    MaskStrategy::blockwise, 2 * base, 0.25, LossRegion::complete});
    arms.push_back({"masked_loss", MaskTarget::depth_only, MaskStrategy::blockwise,
                    MaskStrategy::blockwise, base, 0.25, LossRegion::masked_only});
    return arms;
}

std::vector<std::string> AblationReport::ranking() const {
    std::vector<const AblationCell*> ptrs;
    for (const auto& c : cells) ptrs.push_back(&c);
    std::sort(ptrs.begin(), ptrs.end(),
              [](const AblationCell* a, const AblationCell* b) { return a->mean_rmse < b->mean_rmse; });
    std::vector<std::string> out;
    for (const auto* p : ptrs) out.push_back(p->arm);
    return out;
}

std::string AblationReport::render_table() const {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "arm            clean   blockwise  random    mean\n";
    for (const auto& c : cells) {
        os << c.arm;
        for (size_t i = c.arm.size(); i < 15; ++i) os << ' ';
        os << c.clean_rmse << "  " << c.blockwise_rmse << "     " << c.random_rmse << "  "
           << c.mean_rmse << "\n";
    }
    os << "ranking (best mean first): ";
    const auto order = ranking();
    for (size_t i = 0; i < order.size(); ++i) {
        if (i) os << " > ";
        os << order[i];
    }
    os << "\n";
    return os.str();
}

AblationReport ablation_grid(const TrainConfig& base, const std::vector<AblationArm>& arms,
                             const std::vector<uint64_t>& seeds, const Dataset& train_data,
                             const Dataset& eval_data, bool verbose, const TrainFn& trainer,
                             const EvalOptions& eval_options) {
    AblationReport report;
    report.seeds = seeds;
    for (const AblationArm& arm : arms) {
        AblationCell cell;
        cell.arm = arm.name;
        double clean_acc = 0.0, block_acc = 0.0, random_acc = 0.0;
        for (uint64_t seed : seeds) {
            TrainConfig cfg = arm.configure(base);
            cfg.seed = seed;
            cfg.checkpoint_path.clear();
            if (verbose) {
                std::cerr << "[ablate] arm " << arm.name << " seed " << seed << "\n";
            }
            TrainResult run = trainer ? trainer(cfg) : train(cfg, train_data);
            EvalOptions opt = eval_options;
            opt.run_id = arm.name + "_s" + std::to_string(seed);
            opt.seed = seed;
            const DepthPredictor predictor = network_predictor(run.depth);
            const auto clean = evaluate_suite(EvalSuite::clean, eval_data, predictor, opt);
            const auto occl = evaluate_suite(EvalSuite::occlusion, eval_data, predictor, opt);
            const double c = mean_rmse(clean, "clean", "", "complete");
            const double b = mean_rmse(occl, "occlusion", "blockwise", "complete");
            const double r = mean_rmse(occl, "occlusion", "random", "complete");
            clean_acc += c;
            block_acc += b;
            random_acc += r;
            cell.per_seed_clean.push_back(c);
            cell.runs.push_back(std::move(run.record));
            if (verbose) {
                std::cerr << "[ablate]   clean " << c << " blockwise " << b << " random " << r
                          << "\n";
            }
        }
        const double n = static_cast<double>(seeds.size());
        cell.clean_rmse = clean_acc / n;
        cell.blockwise_rmse = block_acc / n;
        cell.random_rmse = random_acc / n;
        cell.mean_rmse = (cell.clean_rmse + cell.blockwise_rmse + cell.random_rmse) / 3.0;
        report.cells.push_back(std::move(cell));
    }
    return report;
}

}  // namespace maskdepth
