#pragma once

#include <cstdint>

#include "maskdepth/image.hpp"
#include "maskdepth/losses.hpp"
#include "maskdepth/networks.hpp"
#include "maskdepth/scene.hpp"

namespace maskdepth {

enum class AttackMode { untargeted, flip_horizontal, flip_vertical };

std::string to_string(AttackMode mode);
AttackMode attack_mode_from_string(const std::string& name);

/// Iteration schedule: min(eps + 4, ceil(1.25 * eps)).
int attack_iterations(double epsilon);

struct AttackResult {
    Image adversarial;
    double objective_before = 0.0;
    double objective_after = 0.0;
    int iterations = 0;
    double linf = 0.0;  // measured ||x_adv - x||_inf, [0,1] scale
};

/// Iterated sign-gradient ascent on the training loss with respect to the
/// target frame. epsilon is in 255-scale pixel units; the perturbation stays
/// inside the epsilon/255 ball and [0,1]. Step size is epsilon/N per
/// iteration, starting from the clean image.
AttackResult untargeted_attack(const DepthNetwork& depth_net, const EgoMotionNetwork& ego_net,
                               const Triplet& triplet, const LossWeights& weights,
                               double epsilon);

/// Descends RMSE between the predicted depth and a frozen flipped copy of the
/// clean prediction, under the same schedule and projection.
AttackResult targeted_flip_attack(const DepthNetwork& depth_net, const Image& target_image,
                                  double epsilon, AttackMode direction);

/// Horizontal or vertical mirror of an H*W field.
std::vector<double> flip_field(const std::vector<double>& values, int height, int width,
                               bool horizontal);

}  // namespace maskdepth
