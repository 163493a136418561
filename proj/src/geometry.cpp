#include "maskdepth/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace maskdepth {

void Intrinsics::validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("intrinsics: focal lengths must be > 0");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: empty image");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
        throw std::invalid_argument("intrinsics: principal point outside the image");
    }
}

// ---------------------------------------------------------------------------
// RigidTransform

std::array<double, 9> rotation_from_axis_angle(const std::array<double, 3>& r) {
    const double theta_sq = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    double a, b;  // R = I + a*K + b*K^2
    if (theta_sq < 1e-14) {
        a = 1.0 - theta_sq / 6.0;
        b = 0.5 - theta_sq / 24.0;
    } else {
        const double theta = std::sqrt(theta_sq);
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta_sq;
    }
    const double kx = r[0], ky = r[1], kz = r[2];
    // K and K^2 written out
    const std::array<double, 9> K{0, -kz, ky, kz, 0, -kx, -ky, kx, 0};
    std::array<double, 9> K2{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int l = 0; l < 3; ++l) s += K[i * 3 + l] * K[l * 3 + j];
            K2[i * 3 + j] = s;
        }
    }
    std::array<double, 9> R{};
    for (int i = 0; i < 9; ++i) R[i] = (i % 4 == 0 ? 1.0 : 0.0) + a * K[i] + b * K2[i];
    return R;
}

RigidTransform RigidTransform::from_axis_angle(const std::array<double, 3>& r,
                                               const std::array<double, 3>& t) {
    RigidTransform rt;
    rt.rot = rotation_from_axis_angle(r);
    rt.trans = t;
    return rt;
}

std::array<double, 3> RigidTransform::apply(const std::array<double, 3>& p) const {
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
        out[i] = rot[i * 3 + 0] * p[0] + rot[i * 3 + 1] * p[1] + rot[i * 3 + 2] * p[2] + trans[i];
    }
    return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
    RigidTransform out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int l = 0; l < 3; ++l) s += rot[i * 3 + l] * other.rot[l * 3 + j];
            out.rot[i * 3 + j] = s;
        }
        out.trans[i] = rot[i * 3 + 0] * other.trans[0] + rot[i * 3 + 1] * other.trans[1] +
                       rot[i * 3 + 2] * other.trans[2] + trans[i];
    }
    return out;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) out.rot[i * 3 + j] = rot[j * 3 + i];
    }
    for (int i = 0; i < 3; ++i) {
        out.trans[i] = -(out.rot[i * 3 + 0] * trans[0] + out.rot[i * 3 + 1] * trans[1] +
                         out.rot[i * 3 + 2] * trans[2]);
    }
    return out;
}

double RigidTransform::rotation_angle() const {
    const double tr = rot[0] + rot[4] + rot[8];
    const double c = std::min(1.0, std::max(-1.0, (tr - 1.0) / 2.0));
    return std::acos(c);
}

std::array<double, 3> RigidTransform::axis_angle() const {
    const double angle = rotation_angle();
    if (angle < 1e-12) return {0, 0, 0};
    // axis from the skew part of R
    std::array<double, 3> axis{rot[7] - rot[5], rot[2] - rot[6], rot[3] - rot[1]};
    const double s = 2.0 * std::sin(angle);
    if (std::abs(s) < 1e-12) {
        // near pi; fall back to the diagonal
        std::array<double, 3> sq{(rot[0] + 1) / 2, (rot[4] + 1) / 2, (rot[8] + 1) / 2};
        std::array<double, 3> a{std::sqrt(std::max(0.0, sq[0])), std::sqrt(std::max(0.0, sq[1])),
                                std::sqrt(std::max(0.0, sq[2]))};
        // fix signs from off-diagonal sums
        if (rot[1] + rot[3] < 0) a[1] = -a[1];
        if (rot[2] + rot[6] < 0) a[2] = -a[2];
        return {a[0] * angle, a[1] * angle, a[2] * angle};
    }
    return {axis[0] / s * angle, axis[1] / s * angle, axis[2] / s * angle};
}

// ---------------------------------------------------------------------------
// Pose

Pose::Pose() : rotation(Tensor::zeros({3})), translation(Tensor::zeros({3})) {}

Pose::Pose(Tensor r, Tensor t) : rotation(std::move(r)), translation(std::move(t)) {
    if (rotation.numel() != 3 || translation.numel() != 3) {
        throw std::invalid_argument("pose expects 3-vector rotation and translation");
    }
}

Pose Pose::from_rigid(const RigidTransform& rt, bool requires_grad) {
    const auto aa = rt.axis_angle();
    return Pose(Tensor::from_data({3}, {aa[0], aa[1], aa[2]}, requires_grad),
                Tensor::from_data({3}, {rt.trans[0], rt.trans[1], rt.trans[2]}, requires_grad));
}

Pose Pose::inverse() const {
    // R(-r) == R(r)^T, so the inverse stays in axis-angle form.
    Tensor r_inv = neg(rotation);
    Tensor R_inv = axis_angle_to_matrix(r_inv);
    Tensor t_inv = neg(reshape(matmul(R_inv, reshape(translation, {3, 1})), {3}));
    return Pose(r_inv, t_inv);
}

RigidTransform Pose::to_rigid() const {
    RigidTransform rt;
    rt.rot = rotation_from_axis_angle({rotation.at(0), rotation.at(1), rotation.at(2)});
    rt.trans = {translation.at(0), translation.at(1), translation.at(2)};
    return rt;
}

Tensor axis_angle_to_matrix(const Tensor& axis_angle) {
    if (axis_angle.numel() != 3) {
        throw std::invalid_argument("axis_angle_to_matrix expects a 3-vector, got " +
                                    shape_str(axis_angle.shape()));
    }
    Tensor r = reshape(axis_angle, {3});
    Tensor rx = slice(r, 0, 0, 1);
    Tensor ry = slice(r, 0, 1, 2);
    Tensor rz = slice(r, 0, 2, 3);
    Tensor zero = Tensor::zeros({1});
    Tensor K = reshape(
        concat({zero, neg(rz), ry, rz, zero, neg(rx), neg(ry), rx, zero}, 0), {3, 3});
    Tensor theta_sq = sum(mul(r, r));
    Tensor a, b;
    if (theta_sq.value() < 1e-14) {
        a = sub(Tensor::scalar(1.0), div(theta_sq, Tensor::scalar(6.0)));
        b = sub(Tensor::scalar(0.5), div(theta_sq, Tensor::scalar(24.0)));
    } else {
        Tensor theta = sqrt(theta_sq);
        a = div(sin(theta), theta);
        b = div(sub(Tensor::scalar(1.0), cos(theta)), theta_sq);
    }
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    return add(eye, add(mul(a, K), mul(b, matmul(K, K))));
}

// ---------------------------------------------------------------------------
// Warp chain

Tensor backproject(const Tensor& depth, const Intrinsics& K) {
    K.validate();
    if (depth.shape() != Shape{K.height, K.width}) {
        throw std::invalid_argument("depth shape " + shape_str(depth.shape()) +
                                    " does not match intrinsics " + std::to_string(K.height) +
                                    "x" + std::to_string(K.width));
    }
    for (int64_t i = 0; i < depth.numel(); ++i) {
        if (!(depth.at(i) > 0.0)) {
            throw std::domain_error("backproject requires positive depth, found " +
                                    std::to_string(depth.at(i)));
        }
    }
    const int64_t n = static_cast<int64_t>(K.width) * K.height;
    std::vector<double> rays(static_cast<size_t>(3 * n));
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const int64_t i = static_cast<int64_t>(v) * K.width + u;
            rays[i] = (u - K.cx) / K.fx;
            rays[n + i] = (v - K.cy) / K.fy;
            rays[2 * n + i] = 1.0;
        }
    }
    Tensor ray_grid = Tensor::from_data({3, n}, std::move(rays));
    return mul(ray_grid, reshape(depth, {1, n}));
}

SampleGrid project(const Tensor& points, const Pose& pose, const Intrinsics& K, double z_eps) {
    K.validate();
    if (points.shape().size() != 2 || points.shape()[0] != 3) {
        throw std::invalid_argument("project expects [3,N] points, got " +
                                    shape_str(points.shape()));
    }
    const int64_t n = points.shape()[1];
    Tensor R = axis_angle_to_matrix(pose.rotation);
    Tensor cam = add(matmul(R, points), reshape(pose.translation, {3, 1}));
    Tensor x = reshape(slice(cam, 0, 0, 1), {n});
    Tensor y = reshape(slice(cam, 0, 1, 2), {n});
    Tensor z = reshape(slice(cam, 0, 2, 3), {n});

    SampleGrid grid;
    grid.valid.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) grid.valid[i] = z.at(i) > z_eps ? 1 : 0;

    Tensor z_safe = clamp(z, z_eps, std::numeric_limits<double>::infinity());
    grid.u = add(mul(div(x, z_safe), Tensor::scalar(K.fx)), Tensor::scalar(K.cx));
    grid.v = add(mul(div(y, z_safe), Tensor::scalar(K.fy)), Tensor::scalar(K.cy));
    return grid;
}

SampledImage bilinear_sample(const Tensor& src, const Tensor& u, const Tensor& v,
                             const std::vector<uint8_t>& valid_in) {
    const auto& sshape = src.shape();
    if (sshape.size() != 2 && sshape.size() != 3) {
        throw std::invalid_argument("bilinear_sample expects [H,W] or [H,W,C] source, got " +
                                    shape_str(sshape));
    }
    const int64_t H = sshape[0];
    const int64_t W = sshape[1];
    const int64_t C = sshape.size() == 3 ? sshape[2] : 1;
    const int64_t n = u.numel();
    if (v.numel() != n || static_cast<int64_t>(valid_in.size()) != n) {
        throw std::invalid_argument("bilinear_sample grid size mismatch");
    }
    for (int64_t i = 0; i < n; ++i) {
        if (valid_in[i] && (!std::isfinite(u.at(i)) || !std::isfinite(v.at(i)))) {
            throw std::domain_error("bilinear_sample: non-finite grid coordinate");
        }
    }

    auto sn = src.node();
    auto un = u.node();
    auto vn = v.node();
    SampledImage result;
    result.validity.resize(static_cast<size_t>(n));
    std::vector<double> out(static_cast<size_t>(n * C), 0.0);
    const double* ps = sn->data.data();
    for (int64_t i = 0; i < n; ++i) {
        if (!valid_in[i]) {
            result.validity[i] = 0;
            continue;
        }
        const double uu = un->data[i];
        const double vv = vn->data[i];
        result.validity[i] =
            (uu >= 0.0 && uu <= static_cast<double>(W - 1) && vv >= 0.0 &&
             vv <= static_cast<double>(H - 1))
                ? 1
                : 0;
        const double uc = std::min(std::max(uu, 0.0), static_cast<double>(W - 1));
        const double vc = std::min(std::max(vv, 0.0), static_cast<double>(H - 1));
        const int64_t x0 = static_cast<int64_t>(std::floor(uc));
        const int64_t y0 = static_cast<int64_t>(std::floor(vc));
        const int64_t x1 = std::min(x0 + 1, W - 1);
        const int64_t y1 = std::min(y0 + 1, H - 1);
        const double wx = uc - static_cast<double>(x0);
        const double wy = vc - static_cast<double>(y0);
        for (int64_t c = 0; c < C; ++c) {
            const double v00 = ps[(y0 * W + x0) * C + c];
            const double v01 = ps[(y0 * W + x1) * C + c];
            const double v10 = ps[(y1 * W + x0) * C + c];
            const double v11 = ps[(y1 * W + x1) * C + c];
            out[i * C + c] =
                (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
        }
    }

    auto valid_copy = std::make_shared<std::vector<uint8_t>>(valid_in);
    result.values = Tensor(autograd::make_node(
        {n, C}, std::move(out), {sn, un, vn},
        [sn, un, vn, valid_copy, H, W, C, n](autograd::Node& self) {
            const double* g = self.grad.data();
            const double* ps = sn->data.data();
            double* gs = sn->requires_grad ? sn->ensure_grad().data() : nullptr;
            double* gu = un->requires_grad ? un->ensure_grad().data() : nullptr;
            double* gv = vn->requires_grad ? vn->ensure_grad().data() : nullptr;
            for (int64_t i = 0; i < n; ++i) {
                if (!(*valid_copy)[i]) continue;
                const double uu = un->data[i];
                const double vv = vn->data[i];
                const bool u_inside = uu > 0.0 && uu < static_cast<double>(W - 1);
                const bool v_inside = vv > 0.0 && vv < static_cast<double>(H - 1);
                const double uc = std::min(std::max(uu, 0.0), static_cast<double>(W - 1));
                const double vc = std::min(std::max(vv, 0.0), static_cast<double>(H - 1));
                const int64_t x0 = static_cast<int64_t>(std::floor(uc));
                const int64_t y0 = static_cast<int64_t>(std::floor(vc));
                const int64_t x1 = std::min(x0 + 1, W - 1);
                const int64_t y1 = std::min(y0 + 1, H - 1);
                const double wx = uc - static_cast<double>(x0);
                const double wy = vc - static_cast<double>(y0);
                double du = 0.0, dv = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const double gc = g[i * C + c];
                    if (gc == 0.0 && !gs) continue;
                    const double v00 = ps[(y0 * W + x0) * C + c];
                    const double v01 = ps[(y0 * W + x1) * C + c];
                    const double v10 = ps[(y1 * W + x0) * C + c];
                    const double v11 = ps[(y1 * W + x1) * C + c];
                    if (gs) {
                        gs[(y0 * W + x0) * C + c] += gc * (1.0 - wy) * (1.0 - wx);
                        gs[(y0 * W + x1) * C + c] += gc * (1.0 - wy) * wx;
                        gs[(y1 * W + x0) * C + c] += gc * wy * (1.0 - wx);
                        gs[(y1 * W + x1) * C + c] += gc * wy * wx;
                    }
                    du += gc * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                    dv += gc * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                }
                if (gu && u_inside) gu[i] += du;
                if (gv && v_inside) gv[i] += dv;
            }
        }));
    return result;
}

WarpResult synthesize_target(const Tensor& src, const Tensor& depth, const Pose& pose,
                             const Intrinsics& K) {
    const auto& sshape = src.shape();
    if (sshape.size() != 3 || sshape[0] != K.height || sshape[1] != K.width) {
        throw std::invalid_argument("synthesize_target: source shape " + shape_str(sshape) +
                                    " does not match intrinsics");
    }
    Tensor points = backproject(depth, K);
    SampleGrid grid = project(points, pose, K);
    SampledImage sampled = bilinear_sample(src, grid.u, grid.v, grid.valid);
    WarpResult out;
    out.image = reshape(sampled.values, {K.height, K.width, sshape[2]});
    out.validity = std::move(sampled.validity);
    return out;
}

}  // namespace maskdepth
