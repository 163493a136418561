#include "maskdepth/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace maskdepth {

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& p : params_) {
        if (!p.requires_grad()) {
            throw std::invalid_argument("optimizer parameter without requires_grad");
        }
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_count_));
    for (size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto& data = p.raw_data();
        auto& grad = p.grad_buffer();
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
            v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            data[i] -= options_.lr * (m_hat / (std::sqrt(v_hat) + options_.eps) +
                                      options_.weight_decay * data[i]);
        }
    }
    zero_grad();
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace maskdepth
