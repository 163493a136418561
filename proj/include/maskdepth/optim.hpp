#pragma once

#include <cstdint>
#include <vector>

#include "maskdepth/tensor.hpp"

namespace maskdepth {

struct AdamWOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Updates parameter buffers in place and zeroes their gradients afterwards.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWOptions options);

    void step();
    void zero_grad();
    void set_lr(double lr) { options_.lr = lr; }
    double lr() const { return options_.lr; }
    int64_t step_count() const { return step_count_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWOptions options_;
    int64_t step_count_ = 0;
};

}  // namespace maskdepth
