#include <doctest.h>

#include <cmath>

#include "maskdepth/metrics.hpp"
#include "maskdepth/rng.hpp"

using namespace maskdepth;

namespace {

std::vector<RigidTransform> straight_line(int frames, double step, double scale = 1.0,
                                          double yaw_bias_per_frame = 0.0) {
    std::vector<RigidTransform> traj;
    for (int k = 0; k < frames; ++k) {
        RigidTransform rt = RigidTransform::from_axis_angle({0.0, yaw_bias_per_frame * k, 0.0},
                                                            {0, 0, 0});
        rt.trans = {0.0, 0.0, step * k * scale};
        traj.push_back(rt);
    }
    return traj;
}

}  // namespace

TEST_CASE("identical depth maps score zero error and full accuracy") {
    Rng rng(401);
    std::vector<double> gt(64);
    for (auto& v : gt) v = rng.uniform(0.5, 9.0);
    DepthMetrics m = depth_metrics(gt, gt);
    CHECK(m.rmse == doctest::Approx(0.0));
    CHECK(m.delta1 == 1.0);
    CHECK(m.delta2 == 1.0);
    CHECK(m.delta3 == 1.0);
}

TEST_CASE("median scaling removes a constant factor") {
    Rng rng(403);
    std::vector<double> gt(100), pred(100);
    for (size_t i = 0; i < gt.size(); ++i) {
        gt[i] = rng.uniform(1.0, 8.0);
        pred[i] = 2.0 * gt[i];
    }
    DepthMetrics m = depth_metrics(pred, gt);
    CHECK(m.scale == doctest::Approx(0.5));
    CHECK(m.rmse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.delta1 == 1.0);
}

TEST_CASE("factor 1.3 with scaling disabled fails the first threshold") {
    std::vector<double> gt{1.0, 2.0, 3.0, 4.0};
    std::vector<double> pred{1.3, 2.6, 3.9, 5.2};
    DepthMetricOptions opt;
    opt.median_scale = false;
    DepthMetrics m = depth_metrics(pred, gt, opt);
    CHECK(m.delta1 == 0.0);
    CHECK(m.delta2 == 1.0);  // 1.3 < 1.5625
    CHECK(m.delta3 == 1.0);
}

TEST_CASE("delta accuracies are monotone in the threshold exponent") {
    Rng rng(409);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> gt(50), pred(50);
        for (size_t i = 0; i < gt.size(); ++i) {
            gt[i] = rng.uniform(0.5, 10.0);
            pred[i] = gt[i] * rng.uniform(0.5, 2.0);
        }
        DepthMetrics m = depth_metrics(pred, gt);
        CHECK(m.delta1 <= m.delta2);
        CHECK(m.delta2 <= m.delta3);
        CHECK(m.rmse >= 0.0);
    }
}

TEST_CASE("validity mask restricts evaluated pixels and empty gt throws") {
    std::vector<double> gt{1.0, -1.0, 2.0, 3.0};
    std::vector<double> pred{1.0, 99.0, 2.0, 9.0};
    std::vector<uint8_t> valid{1, 1, 1, 0};
    DepthMetricOptions opt;
    opt.median_scale = false;
    DepthMetrics m = depth_metrics(pred, gt, opt, valid);
    CHECK(m.n_pixels == 2);  // the -1 gt pixel and the masked one drop out
    CHECK(m.rmse == doctest::Approx(0.0));

    CHECK_THROWS_AS(depth_metrics(pred, std::vector<double>{-1, -1, -1, -1}, opt),
                    std::invalid_argument);
}

TEST_CASE("identical trajectories give zero odometry error") {
    auto traj = straight_line(30, 0.5);
    OdometryMetrics m = odometry_metrics(traj, traj);
    CHECK(m.t_err_percent == doctest::Approx(0.0));
    CHECK(m.r_err_deg_per_100 == doctest::Approx(0.0));
    CHECK(m.n_segments > 0);
}

TEST_CASE("uniform 1.1x translation scaling reads as 10 percent drift") {
    auto gt = straight_line(40, 0.5);
    auto pred = straight_line(40, 0.5, 1.1);
    OdometryMetrics m = odometry_metrics(pred, gt);
    CHECK(m.t_err_percent == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(m.r_err_deg_per_100 == doctest::Approx(0.0));
}

TEST_CASE("constant yaw bias grows the rotation error linearly") {
    auto gt = straight_line(40, 0.5);
    const double theta = 0.002;
    auto pred1 = straight_line(40, 0.5, 1.0, theta);
    auto pred2 = straight_line(40, 0.5, 1.0, 2.0 * theta);
    OdometryMetrics m1 = odometry_metrics(pred1, gt);
    OdometryMetrics m2 = odometry_metrics(pred2, gt);
    CHECK(m1.r_err_deg_per_100 > 0.0);
    CHECK(m2.r_err_deg_per_100 == doctest::Approx(2.0 * m1.r_err_deg_per_100).epsilon(1e-6));
}

TEST_CASE("odometry metrics are invariant to a global rigid transform") {
    Rng rng(419);
    // step incommensurate with the segment lengths, so boundary frame
    // selection cannot flip on 1-ulp path length changes
    auto gt = straight_line(40, 0.37);
    auto pred = straight_line(40, 0.37, 1.05, 0.001);
    OdometryMetrics base = odometry_metrics(pred, gt);

    const RigidTransform g =
        RigidTransform::from_axis_angle({0.3, -0.2, 0.5}, {4.0, -2.0, 7.0});
    std::vector<RigidTransform> gt2, pred2;
    for (size_t i = 0; i < gt.size(); ++i) {
        gt2.push_back(g.compose(gt[i]));
        pred2.push_back(g.compose(pred[i]));
    }
    OdometryMetrics moved = odometry_metrics(pred2, gt2);
    CHECK(moved.t_err_percent == doctest::Approx(base.t_err_percent).epsilon(1e-9));
    CHECK(moved.r_err_deg_per_100 == doctest::Approx(base.r_err_deg_per_100).epsilon(1e-9));
}

TEST_CASE("segments longer than the trajectory are reported as skipped") {
    auto traj = straight_line(6, 0.5);  // total length 2.5
    OdometryMetrics m = odometry_metrics(traj, traj, {1.0, 2.0, 50.0});
    CHECK(m.skipped_lengths == std::vector<double>{50.0});

    CHECK_THROWS_AS(odometry_metrics(traj, traj, {100.0}), std::invalid_argument);
    auto short_traj = straight_line(3, 0.5);
    auto mismatched = straight_line(4, 0.5);
    CHECK_THROWS_AS(odometry_metrics(short_traj, mismatched), std::invalid_argument);
}
