#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "maskdepth/tensor.hpp"

namespace maskdepth {

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;
};

/// Rigid transform on plain doubles, for rendering, ground truth and
/// metrics. p_out = R * p_in + t.
struct RigidTransform {
    std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
    std::array<double, 3> trans{0, 0, 0};

    static RigidTransform identity() { return {}; }
    static RigidTransform from_axis_angle(const std::array<double, 3>& r,
                                          const std::array<double, 3>& t);

    std::array<double, 3> apply(const std::array<double, 3>& p) const;
    /// this ∘ other: applies `other` first.
    RigidTransform compose(const RigidTransform& other) const;
    RigidTransform inverse() const;
    double rotation_angle() const;
    std::array<double, 3> axis_angle() const;
};

/// Camera pose as gradient-graph leaves: axis-angle rotation plus
/// translation, both shape [3].
struct Pose {
    Tensor rotation;
    Tensor translation;

    Pose();
    Pose(Tensor r, Tensor t);
    static Pose identity() { return Pose(); }
    static Pose from_rigid(const RigidTransform& rt, bool requires_grad = false);

    Pose inverse() const;
    RigidTransform to_rigid() const;
};

/// Rodrigues map, differentiable, with a second-order Taylor branch for tiny
/// angles.
Tensor axis_angle_to_matrix(const Tensor& axis_angle);

/// Plain-double Rodrigues.
std::array<double, 9> rotation_from_axis_angle(const std::array<double, 3>& r);

/// point(u,v) = depth(u,v) * K^-1 * (u,v,1)^T, flattened to [3, H*W].
Tensor backproject(const Tensor& depth, const Intrinsics& K);

struct SampleGrid {
    Tensor u;  // [N]
    Tensor v;  // [N]
    std::vector<uint8_t> valid;  // z > z_eps after the rigid transform
};

inline constexpr double kZEps = 1e-3;

SampleGrid project(const Tensor& points, const Pose& pose, const Intrinsics& K,
                   double z_eps = kZEps);

struct SampledImage {
    Tensor values;  // [N, C]
    std::vector<uint8_t> validity;  // input validity AND inside the source frame
};

/// Border-clamped bilinear lookup of src [H,W,C] at (u[i], v[i]).
/// Differentiable in src and in the grid coordinates. Rows flagged invalid on
/// input come out as zeros.
SampledImage bilinear_sample(const Tensor& src, const Tensor& u, const Tensor& v,
                             const std::vector<uint8_t>& valid_in);

struct WarpResult {
    Tensor image;  // [H,W,C]
    std::vector<uint8_t> validity;  // [H*W]
};

/// backproject -> project -> bilinear_sample; the view-synthesis step that
/// rebuilds the target frame from a source frame.
WarpResult synthesize_target(const Tensor& src, const Tensor& depth, const Pose& pose,
                             const Intrinsics& K);

}  // namespace maskdepth
