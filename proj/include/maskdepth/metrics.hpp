#pragma once

#include <cstdint>
#include <vector>

#include "maskdepth/geometry.hpp"

namespace maskdepth {

struct DepthMetrics {
    double rmse = 0.0;
    double delta1 = 0.0;  // max(p/g, g/p) < 1.25
    double delta2 = 0.0;  // < 1.25^2
    double delta3 = 0.0;  // < 1.25^3
    double scale = 1.0;   // applied median-scaling factor
    int64_t n_pixels = 0;
};

struct DepthMetricOptions {
    double clamp_min = 0.1;
    double clamp_max = 100.0;
    bool median_scale = true;
};

/// RMSE and threshold accuracies between predicted and ground-truth depth.
/// `valid` restricts evaluated pixels (empty means all); median scaling is
/// computed over the evaluated pixels.
DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt,
                           const DepthMetricOptions& options = {},
                           const std::vector<uint8_t>& valid = {});

struct OdometryMetrics {
    double t_err_percent = 0.0;      // translation drift as % of segment length
    double r_err_deg_per_100 = 0.0;  // rotation drift in degrees per 100 units
    std::vector<double> skipped_lengths;  // segments longer than the trajectory
    int64_t n_segments = 0;
};

/// Segment-based odometry error over camera-to-world trajectories: for every
/// start frame and segment length, compares relative motion of prediction
/// and ground truth over the segment.
OdometryMetrics odometry_metrics(const std::vector<RigidTransform>& pred,
                                 const std::vector<RigidTransform>& gt,
                                 const std::vector<double>& segment_lengths = {1.0, 2.0, 4.0,
                                                                               8.0});

double median(std::vector<double> values);

}  // namespace maskdepth
