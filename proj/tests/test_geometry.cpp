#include <doctest.h>

#include <cmath>

#include "maskdepth/geometry.hpp"
#include "maskdepth/rng.hpp"
#include "testutil.hpp"

using namespace maskdepth;
using testutil::check_gradients;
using testutil::random_tensor;

namespace {

Intrinsics toy_intrinsics(int h = 8, int w = 8) {
    Intrinsics K;
    K.fx = K.fy = 10.0;
    K.cx = (w - 1) / 2.0;
    K.cy = (h - 1) / 2.0;
    K.width = w;
    K.height = h;
    return K;
}

}  // namespace

TEST_CASE("axis angle basics") {
    Tensor r0 = Tensor::zeros({3});
    Tensor I = axis_angle_to_matrix(r0);
    for (int i = 0; i < 9; ++i) CHECK(I.at(i) == doctest::Approx(i % 4 == 0 ? 1.0 : 0.0));

    Tensor rz = Tensor::from_data({3}, {0, 0, M_PI / 2});
    Tensor R = axis_angle_to_matrix(rz);
    // (1,0,0) -> (0,1,0)
    CHECK(R.at(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(R.at(3) == doctest::Approx(1.0));
    CHECK(R.at(6) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("axis angle orthonormality on random rotations") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        std::array<double, 3> r{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const auto R = rotation_from_axis_angle(r);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                double dot = 0;
                for (int l = 0; l < 3; ++l) dot += R[l * 3 + i] * R[l * 3 + j];
                CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
            }
        }
        const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                           R[2] * (R[3] * R[7] - R[4] * R[6]);
        CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("axis angle gradient near zero and away from zero") {
    Rng rng(103);
    for (double scale : {1e-9, 0.5}) {
        Tensor r = Tensor::from_data(
            {3}, {scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1)},
            true);
        Tensor w = random_tensor(rng, {3, 3}, false);
        const double err =
            check_gradients({r}, [&] { return sum(mul(axis_angle_to_matrix(r), w)); }, 1e-6);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("pose inverse composes to identity") {
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 3> r{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::array<double, 3> t{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const auto rt = RigidTransform::from_axis_angle(r, t);
        const auto id = rt.compose(rt.inverse());
        for (int i = 0; i < 9; ++i) CHECK(std::abs(id.rot[i] - (i % 4 == 0 ? 1 : 0)) < 1e-9);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(id.trans[i]) < 1e-9);

        Pose p = Pose::from_rigid(rt);
        const auto id2 = p.to_rigid().compose(p.inverse().to_rigid());
        for (int i = 0; i < 9; ++i) CHECK(std::abs(id2.rot[i] - (i % 4 == 0 ? 1 : 0)) < 1e-9);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(id2.trans[i]) < 1e-9);
    }
}

TEST_CASE("axis_angle round trip through rigid transform") {
    Rng rng(109);
    for (int trial = 0; trial < 30; ++trial) {
        std::array<double, 3> r{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                rng.uniform(-1.5, 1.5)};
        const auto rt = RigidTransform::from_axis_angle(r, {0, 0, 0});
        const auto back = rt.axis_angle();
        const auto rt2 = RigidTransform::from_axis_angle(back, {0, 0, 0});
        for (int i = 0; i < 9; ++i) CHECK(rt.rot[i] == doctest::Approx(rt2.rot[i]).epsilon(1e-9));
    }
}

TEST_CASE("backproject principal ray and unit tangent") {
    Intrinsics K;
    K.fx = K.fy = 100.0;
    K.cx = 50.0;
    K.cy = 50.0;
    K.width = 101;
    K.height = 101;
    Tensor depth = Tensor::full({101, 101}, 2.0);
    Tensor pts = backproject(depth, K);
    const int64_t n = 101 * 101;
    const int64_t principal = 50 * 101 + 50;
    CHECK(pts.at(principal) == doctest::Approx(0.0));
    CHECK(pts.at(n + principal) == doctest::Approx(0.0));
    CHECK(pts.at(2 * n + principal) == doctest::Approx(2.0));

    // fx=fy=100, cx=cy=0, pixel (100,0), depth 2 -> (2,0,2)
    Intrinsics K2;
    K2.fx = K2.fy = 100.0;
    K2.cx = K2.cy = 0.0;
    K2.width = 101;
    K2.height = 2;
    Tensor d2 = Tensor::full({2, 101}, 2.0);
    Tensor p2 = backproject(d2, K2);
    const int64_t n2 = 2 * 101;
    CHECK(p2.at(100) == doctest::Approx(2.0));
    CHECK(p2.at(n2 + 100) == doctest::Approx(0.0));
    CHECK(p2.at(2 * n2 + 100) == doctest::Approx(2.0));

    Tensor bad = Tensor::full({101, 101}, -1.0);
    CHECK_THROWS_AS(backproject(bad, K), std::domain_error);
}

TEST_CASE("project identity pose reproduces the pixel grid") {
    const Intrinsics K = toy_intrinsics();
    Tensor depth = Tensor::full({8, 8}, 3.7);
    SampleGrid grid = project(backproject(depth, K), Pose::identity(), K);
    for (int v = 0; v < 8; ++v) {
        for (int u = 0; u < 8; ++u) {
            const int64_t i = v * 8 + u;
            CHECK(std::abs(grid.u.at(i) - u) < 1e-9);
            CHECK(std::abs(grid.v.at(i) - v) < 1e-9);
            CHECK(grid.valid[i] == 1);
        }
    }
}

TEST_CASE("project pure z translation matches the analytic contraction") {
    const Intrinsics K = toy_intrinsics(16, 16);
    const double d = 4.0;
    const double tz = 1.5;
    Tensor depth = Tensor::full({16, 16}, d);
    Pose pose(Tensor::zeros({3}), Tensor::from_data({3}, {0, 0, tz}));
    SampleGrid grid = project(backproject(depth, K), pose, K);
    for (int v = 0; v < 16; ++v) {
        for (int u = 0; u < 16; ++u) {
            const int64_t i = v * 16 + u;
            const double expect_u = K.cx + (u - K.cx) * d / (d + tz);
            const double expect_v = K.cy + (v - K.cy) * d / (d + tz);
            CHECK(grid.u.at(i) == doctest::Approx(expect_u).epsilon(1e-12));
            CHECK(grid.v.at(i) == doctest::Approx(expect_v).epsilon(1e-12));
        }
    }
}

TEST_CASE("points behind the camera are flagged invalid") {
    const Intrinsics K = toy_intrinsics();
    Tensor depth = Tensor::full({8, 8}, 1.0);
    Pose pose(Tensor::zeros({3}), Tensor::from_data({3}, {0, 0, -2.0}));
    SampleGrid grid = project(backproject(depth, K), pose, K);
    for (auto flag : grid.valid) CHECK(flag == 0);
}

TEST_CASE("bilinear sample exact copy on the integer grid and midpoint") {
    Rng rng(113);
    Tensor src = random_tensor(rng, {4, 5, 2}, false, 0.0, 1.0);
    std::vector<double> us, vs;
    for (int v = 0; v < 4; ++v) {
        for (int u = 0; u < 5; ++u) {
            us.push_back(u);
            vs.push_back(v);
        }
    }
    const int64_t n = 20;
    SampledImage s = bilinear_sample(src, Tensor::from_data({n}, us), Tensor::from_data({n}, vs),
                                     std::vector<uint8_t>(n, 1));
    for (int64_t i = 0; i < n * 2; ++i) CHECK(s.values.at(i) == src.at(i));
    for (auto f : s.validity) CHECK(f == 1);

    Tensor row = Tensor::from_data({1, 2, 1}, {0.0, 1.0});
    SampledImage mid = bilinear_sample(row, Tensor::from_data({1}, {0.5}),
                                       Tensor::from_data({1}, {0.0}), {1});
    CHECK(mid.values.at(0) == doctest::Approx(0.5));
}

TEST_CASE("bilinear sample gradient wrt grid matches finite differences") {
    Rng rng(127);
    Tensor src = random_tensor(rng, {6, 6}, true, 0.0, 1.0);
    // keep fractional parts away from the interpolation kinks
    std::vector<double> us, vs;
    for (int i = 0; i < 10; ++i) {
        us.push_back(rng.uniform_int(0, 4) + rng.uniform(0.25, 0.75));
        vs.push_back(rng.uniform_int(0, 4) + rng.uniform(0.25, 0.75));
    }
    Tensor u = Tensor::from_data({10}, us, true);
    Tensor v = Tensor::from_data({10}, vs, true);
    Tensor w = random_tensor(rng, {10, 1}, false);
    const std::vector<uint8_t> valid(10, 1);
    const double err = check_gradients({src, u, v}, [&] {
        return sum(mul(bilinear_sample(src, u, v, valid).values, w));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("synthesize with identity pose reproduces the source") {
    Rng rng(131);
    const Intrinsics K = toy_intrinsics(8, 8);
    Tensor src = random_tensor(rng, {8, 8, 3}, false, 0.0, 1.0);
    for (double d : {0.7, 2.0, 55.0}) {
        Tensor depth = Tensor::full({8, 8}, d);
        WarpResult w = synthesize_target(src, depth, Pose::identity(), K);
        for (int64_t i = 0; i < src.numel(); ++i) {
            CHECK(std::abs(w.image.at(i) - src.at(i)) <= 1e-12);
        }
        for (auto f : w.validity) CHECK(f == 1);
    }
}

TEST_CASE("large translation exits the frustum and zeroes validity") {
    Rng rng(137);
    const Intrinsics K = toy_intrinsics(8, 8);
    Tensor src = random_tensor(rng, {8, 8, 3}, false, 0.0, 1.0);
    Tensor depth = Tensor::full({8, 8}, 2.0);
    Pose pose(Tensor::zeros({3}), Tensor::from_data({3}, {50.0, 0, 0}));
    WarpResult w = synthesize_target(src, depth, pose, K);
    int valid_count = 0;
    for (size_t i = 0; i < w.validity.size(); ++i) {
        if (w.validity[i]) ++valid_count;
        if (!w.validity[i]) {
            for (int c = 0; c < 3; ++c) CHECK(w.image.at(i * 3 + c) == w.image.at(i * 3 + c));
        }
    }
    CHECK(valid_count == 0);
}

TEST_CASE("synthesize gradient wrt depth and pose") {
    Rng rng(139);
    const Intrinsics K = toy_intrinsics(6, 6);
    Tensor src = random_tensor(rng, {6, 6, 3}, false, 0.0, 1.0);
    std::vector<double> dvals(36);
    for (auto& d : dvals) d = rng.uniform(2.0, 4.0);
    Tensor depth = Tensor::from_data({6, 6}, dvals, true);
    Tensor r = Tensor::from_data({3}, {0.01, -0.02, 0.015}, true);
    Tensor t = Tensor::from_data({3}, {0.05, 0.02, -0.04}, true);
    Tensor target = random_tensor(rng, {6, 6, 3}, false, 0.0, 1.0);
    const double err = check_gradients(
        {depth, r, t},
        [&] {
            WarpResult w = synthesize_target(src, depth, Pose(r, t), K);
            Tensor diff = sub(w.image, target);
            return mean(mul(diff, diff));
        },
        1e-6);
    CHECK(err < 1e-4);
}
