#include "maskdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maskdepth {

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty range");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt,
                           const DepthMetricOptions& options,
                           const std::vector<uint8_t>& valid) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("depth_metrics: prediction and ground truth sizes differ");
    }
    if (!valid.empty() && valid.size() != gt.size()) {
        throw std::invalid_argument("depth_metrics: validity mask size mismatch");
    }
    std::vector<double> p_vals, g_vals;
    p_vals.reserve(pred.size());
    g_vals.reserve(gt.size());
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!valid.empty() && !valid[i]) continue;
        if (!(gt[i] > 0.0)) continue;
        p_vals.push_back(pred[i]);
        g_vals.push_back(gt[i]);
    }
    if (p_vals.empty()) throw std::invalid_argument("depth_metrics: no valid ground truth pixels");

    DepthMetrics m;
    m.n_pixels = static_cast<int64_t>(p_vals.size());
    m.scale = 1.0;
    if (options.median_scale) {
        const double med_p = median(p_vals);
        if (med_p <= 0.0) throw std::domain_error("depth_metrics: non-positive prediction median");
        m.scale = median(g_vals) / med_p;
    }
    double se = 0.0;
    int64_t hit1 = 0, hit2 = 0, hit3 = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (size_t i = 0; i < p_vals.size(); ++i) {
        const double p = std::clamp(p_vals[i] * m.scale, options.clamp_min, options.clamp_max);
        const double g = std::clamp(g_vals[i], options.clamp_min, options.clamp_max);
        const double d = p - g;
        se += d * d;
        const double ratio = std::max(p / g, g / p);
        hit1 += ratio < t1;
        hit2 += ratio < t2;
        hit3 += ratio < t3;
    }
    const double n = static_cast<double>(p_vals.size());
    m.rmse = std::sqrt(se / n);
    m.delta1 = hit1 / n;
    m.delta2 = hit2 / n;
    m.delta3 = hit3 / n;
    return m;
}

OdometryMetrics odometry_metrics(const std::vector<RigidTransform>& pred,
                                 const std::vector<RigidTransform>& gt,
                                 const std::vector<double>& segment_lengths) {
    if (pred.size() != gt.size()) {
        throw std::invalid_argument("odometry_metrics: trajectory lengths differ");
    }
    if (gt.size() < 2) throw std::invalid_argument("odometry_metrics: trajectory too short");

    // cumulative ground-truth path length
    std::vector<double> dist(gt.size(), 0.0);
    for (size_t i = 1; i < gt.size(); ++i) {
        double step = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double d = gt[i].trans[a] - gt[i - 1].trans[a];
            step += d * d;
        }
        dist[i] = dist[i - 1] + std::sqrt(step);
    }

    OdometryMetrics out;
    double t_sum = 0.0, r_sum = 0.0;
    for (double length : segment_lengths) {
        if (dist.back() < length) {
            out.skipped_lengths.push_back(length);
            continue;
        }
        for (size_t start = 0; start < gt.size(); ++start) {
            // first frame at least `length` down the path
            size_t end = start + 1;
            while (end < gt.size() && dist[end] - dist[start] < length) ++end;
            if (end >= gt.size()) break;
            const RigidTransform rel_gt = gt[end].inverse().compose(gt[start]);
            const RigidTransform rel_pred = pred[end].inverse().compose(pred[start]);
            const RigidTransform err = rel_gt.inverse().compose(rel_pred);
            double t_norm = 0.0;
            for (int a = 0; a < 3; ++a) t_norm += err.trans[a] * err.trans[a];
            t_norm = std::sqrt(t_norm);
            const double seg = dist[end] - dist[start];
            t_sum += t_norm / seg * 100.0;
            r_sum += err.rotation_angle() * (180.0 / M_PI) / seg * 100.0;
            ++out.n_segments;
        }
    }
    if (out.n_segments == 0) {
        throw std::invalid_argument("odometry_metrics: no segment fits the trajectory");
    }
    out.t_err_percent = t_sum / static_cast<double>(out.n_segments);
    out.r_err_deg_per_100 = r_sum / static_cast<double>(out.n_segments);
    return out;
}

}  // namespace maskdepth
