#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maskdepth/attacks.hpp"
#include "maskdepth/corruptions.hpp"
#include "maskdepth/metrics.hpp"
#include "maskdepth/networks.hpp"
#include "maskdepth/scene.hpp"

namespace maskdepth {

/// Maps (image, triplet index) to an H*W depth prediction. The index lets
/// oracle predictors look up ground truth.
using DepthPredictor = std::function<std::vector<double>(const Image&, int64_t)>;

DepthPredictor network_predictor(const DepthNetwork& net);
DepthPredictor gt_oracle_predictor(const Dataset& dataset);

std::vector<double> predict_depth(const DepthNetwork& net, const Image& img);

/// Integrates ego-motion pair predictions over frames [begin, end) into a
/// camera-to-world trajectory starting at the identity.
std::vector<RigidTransform> predict_trajectory(const EgoMotionNetwork& ego, const Dataset& ds,
                                               int64_t frame_begin, int64_t frame_end);

enum class EvalSuite { clean, corruption, occlusion, attack };

std::string to_string(EvalSuite suite);
EvalSuite suite_from_string(const std::string& name);

struct EvalRow {
    std::string run_id;
    std::string suite;
    std::string perturbation;
    double level = 0.0;  // severity or epsilon
    int64_t image_index = 0;
    std::string region;  // complete / unmasked / masked
    DepthMetrics metrics;
};

struct EvalOptions {
    std::string run_id = "run";
    std::vector<int> severities{1, 2, 3, 4, 5};
    std::vector<CorruptionKind> corruption_kinds = all_corruption_kinds();
    double occlusion_ratio = 0.25;
    int occlusion_mask_size = 16;
    double occlusion_aspect = 0.3;
    std::vector<double> untargeted_eps{1, 2, 4, 8, 16};
    std::vector<double> targeted_eps{1, 2, 4};
    uint64_t seed = 0;
    DepthMetricOptions metric_options;
    LossWeights loss_weights;  // attack objective
    int64_t max_images = -1;   // cap evaluated triplets; -1 means all
};

/// Runs one suite over the dataset's triplet centers, one row per
/// (image, perturbation[, region]). The attack suite needs both networks.
std::vector<EvalRow> evaluate_suite(EvalSuite suite, const Dataset& dataset,
                                    const DepthPredictor& predictor, const EvalOptions& options,
                                    const DepthNetwork* depth_net = nullptr,
                                    const EgoMotionNetwork* ego_net = nullptr);

void write_csv(const std::string& path, const std::vector<EvalRow>& rows);
std::vector<EvalRow> read_csv(const std::string& path);

/// Mean RMSE over rows matching suite/perturbation/region ("" matches any).
double mean_rmse(const std::vector<EvalRow>& rows, const std::string& suite = "",
                 const std::string& perturbation = "", const std::string& region = "");

/// Worker count for parallel evaluation: MASKDEPTH_THREADS, else 1.
int worker_threads();

}  // namespace maskdepth
