#include "maskdepth/attacks.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace maskdepth {

std::string to_string(AttackMode mode) {
    switch (mode) {
        case AttackMode::untargeted: return "untargeted";
        case AttackMode::flip_horizontal: return "flip_horizontal";
        case AttackMode::flip_vertical: return "flip_vertical";
    }
    throw std::invalid_argument("unknown attack mode");
}

AttackMode attack_mode_from_string(const std::string& name) {
    if (name == "untargeted") return AttackMode::untargeted;
    if (name == "flip_horizontal") return AttackMode::flip_horizontal;
    if (name == "flip_vertical") return AttackMode::flip_vertical;
    throw std::invalid_argument("unsupported attack mode: " + name);
}

int attack_iterations(double epsilon) {
    if (epsilon <= 0.0) throw std::invalid_argument("attack epsilon must be positive");
    return static_cast<int>(std::min(epsilon + 4.0, std::ceil(1.25 * epsilon)));
}

std::vector<double> flip_field(const std::vector<double>& values, int height, int width,
                               bool horizontal) {
    if (static_cast<size_t>(height) * width != values.size()) {
        throw std::invalid_argument("flip_field size mismatch");
    }
    std::vector<double> out(values.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int sy = horizontal ? y : height - 1 - y;
            const int sx = horizontal ? width - 1 - x : x;
            out[static_cast<size_t>(y) * width + x] = values[static_cast<size_t>(sy) * width + sx];
        }
    }
    return out;
}

namespace {

void warn_epsilon(double eps, std::initializer_list<double> expected) {
    for (double e : expected) {
        if (eps == e) return;
    }
    std::cerr << "warning: attack epsilon " << eps << " outside the evaluated set\n";
}

// One ascent/descent iteration bookkeeping: sign step, epsilon-ball and
// range projection against the clean image.
void apply_sign_step(Image& x, const Image& clean, const std::vector<double>& grad,
                     double alpha_unit, double eps_unit, bool ascend) {
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double g = grad[i];
        const double step = g > 0.0 ? alpha_unit : (g < 0.0 ? -alpha_unit : 0.0);
        double v = x.data[i] + (ascend ? step : -step);
        v = std::min(clean.data[i] + eps_unit, std::max(clean.data[i] - eps_unit, v));
        x.data[i] = std::min(1.0, std::max(0.0, v));
    }
}

double linf_distance(const Image& a, const Image& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

}  // namespace

AttackResult untargeted_attack(const DepthNetwork& depth_net, const EgoMotionNetwork& ego_net,
                               const Triplet& triplet, const LossWeights& weights,
                               double epsilon) {
    warn_epsilon(epsilon, {1.0, 2.0, 4.0, 8.0, 16.0});
    const int N = attack_iterations(epsilon);
    const double eps_unit = epsilon / 255.0;
    const double alpha_unit = eps_unit / static_cast<double>(N);
    const Intrinsics& K = triplet.K;

    Tensor prev = to_tensor(triplet.prev);
    Tensor next = to_tensor(triplet.next);
    Tensor prev_b = reshape(prev, {1, K.height, K.width, 3});
    Tensor next_b = reshape(next, {1, K.height, K.width, 3});

    auto training_loss = [&](const Tensor& x) {
        Tensor xb = reshape(x, {1, K.height, K.width, 3});
        Tensor pair_prev = concat({prev_b, xb}, 3);
        Tensor pair_next = concat({xb, next_b}, 3);
        Tensor ego_out = ego_net.forward(concat({pair_prev, pair_next}, 0));
        Pose t_prev_to_t0 = EgoMotionNetwork::pose_from_output(ego_out, 0);
        Pose t_t0_to_next = EgoMotionNetwork::pose_from_output(ego_out, 1);
        Tensor depth = reshape(depth_net.forward(xb).depth, {K.height, K.width});
        return depth_loss(x, prev, next, depth, t_prev_to_t0.inverse(), t_t0_to_next, K,
                          weights)
            .total;
    };

    AttackResult result;
    result.iterations = N;
    result.adversarial = triplet.target;
    result.objective_before = training_loss(to_tensor(triplet.target)).value();
    for (int it = 0; it < N; ++it) {
        Tensor x = to_tensor(result.adversarial, true);
        Tensor loss = training_loss(x);
        loss.backward();
        std::vector<double> grad(x.grad().begin(), x.grad().end());
        apply_sign_step(result.adversarial, triplet.target, grad, alpha_unit, eps_unit, true);
    }
    result.objective_after = training_loss(to_tensor(result.adversarial)).value();
    result.linf = linf_distance(result.adversarial, triplet.target);
    return result;
}

AttackResult targeted_flip_attack(const DepthNetwork& depth_net, const Image& target_image,
                                  double epsilon, AttackMode direction) {
    if (direction == AttackMode::untargeted) {
        throw std::invalid_argument("targeted attack needs a flip direction");
    }
    warn_epsilon(epsilon, {1.0, 2.0, 4.0});
    const int N = attack_iterations(epsilon);
    const double eps_unit = epsilon / 255.0;
    const double alpha_unit = eps_unit / static_cast<double>(N);
    const int H = target_image.height;
    const int W = target_image.width;

    auto predict_depth = [&](const Tensor& x) {
        return reshape(depth_net.forward(reshape(x, {1, H, W, 3})).depth, {H, W});
    };

    // frozen flipped target from the clean prediction
    Tensor clean_depth = predict_depth(to_tensor(target_image));
    std::vector<double> flipped = flip_field(
        std::vector<double>(clean_depth.data().begin(), clean_depth.data().end()), H, W,
        direction == AttackMode::flip_horizontal);
    Tensor target_depth = Tensor::from_data({H, W}, flipped);

    auto rmse_to_target = [&](const Tensor& x) {
        Tensor diff = sub(predict_depth(x), target_depth);
        return sqrt(mean(mul(diff, diff)));
    };

    AttackResult result;
    result.iterations = N;
    result.adversarial = target_image;
    result.objective_before = rmse_to_target(to_tensor(target_image)).value();
    for (int it = 0; it < N; ++it) {
        Tensor x = to_tensor(result.adversarial, true);
        Tensor objective = rmse_to_target(x);
        objective.backward();
        std::vector<double> grad(x.grad().begin(), x.grad().end());
        apply_sign_step(result.adversarial, target_image, grad, alpha_unit, eps_unit, false);
    }
    result.objective_after = rmse_to_target(to_tensor(result.adversarial)).value();
    result.linf = linf_distance(result.adversarial, target_image);
    return result;
}

}  // namespace maskdepth
