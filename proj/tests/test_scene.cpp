#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "maskdepth/losses.hpp"
#include "maskdepth/scene.hpp"

using namespace maskdepth;
namespace fs = std::filesystem;

namespace {

SceneSpec quick_spec(uint64_t seed = 0) {
    SceneSpec spec;
    spec.seed = seed;
    return spec;
}

std::string temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir.string();
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("fronto-parallel wall gives exactly constant depth") {
    SceneSpec spec = quick_spec();
    spec.n_boxes = 0;
    spec.ground_y = 1e6;  // out of view
    spec.wall_z = 2.5;
    spec.yaw_amplitude = 0.0;
    spec.sway_amplitude = 0.0;
    RenderedFrame f = render_scene(spec, 0, 0);
    for (double d : f.depth) CHECK(std::abs(d - 2.5) < 1e-9);
}

TEST_CASE("box front face depth is the analytic slab distance") {
    SceneSpec spec = quick_spec();
    spec.n_boxes = 1;
    RenderedFrame f = render_scene(spec, 0, 0);
    // pixels on the ground follow depth = ground_y * fy / (v - cy)
    const Intrinsics K = spec.intrinsics();
    for (int v = 48; v < 64; ++v) {
        const int u = 2;  // lateral column unlikely to hit the single box
        const double expect = spec.ground_y * K.fy / (v - K.cy);
        const double got = f.depth[static_cast<size_t>(v) * spec.width + u];
        if (got < expect + 1e-6) {  // not occluded by the box
            CHECK(std::abs(got - expect) < 1e-9);
        }
    }
}

TEST_CASE("rendering is deterministic in the seed") {
    SceneSpec spec = quick_spec(9);
    RenderedFrame a = render_scene(spec, 2, 3);
    RenderedFrame b = render_scene(spec, 2, 3);
    CHECK(a.image.data == b.image.data);
    CHECK(a.depth == b.depth);
    RenderedFrame c = render_scene(quick_spec(10), 2, 3);
    CHECK(a.image.data != c.image.data);
}

TEST_CASE("image values stay in range and depth is positive everywhere") {
    RenderedFrame f = render_scene(quick_spec(3), 0, 5);
    for (double v : f.image.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double d : f.depth) CHECK(d > 0.0);
}

TEST_CASE("ppm and pfm round trips") {
    const std::string dir = temp_dir("maskdepth_io_test");
    fs::create_directories(dir);
    RenderedFrame f = render_scene(quick_spec(4), 0, 0);

    const std::string ppm = dir + "/frame.ppm";
    write_ppm(ppm, f.image);
    Image back = read_ppm(ppm);
    REQUIRE(back.data.size() == f.image.data.size());
    for (size_t i = 0; i < back.data.size(); ++i) {
        CHECK(std::abs(back.data[i] - f.image.data[i]) <= 0.5 / 255.0 + 1e-12);
    }
    // storage-precision fixed point: a second write/read is bit-identical
    write_ppm(ppm, back);
    Image back2 = read_ppm(ppm);
    CHECK(back.data == back2.data);

    const std::string pfm = dir + "/depth.pfm";
    write_pfm(pfm, f.depth, f.image.height, f.image.width);
    int h = 0, w = 0;
    std::vector<double> d1 = read_pfm(pfm, h, w);
    CHECK(h == f.image.height);
    CHECK(w == f.image.width);
    for (size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1[i] == static_cast<double>(static_cast<float>(f.depth[i])));
    }
    write_pfm(pfm, d1, h, w);
    std::vector<double> d2 = read_pfm(pfm, h, w);
    CHECK(d1 == d2);

    CHECK_THROWS_AS(read_ppm(dir + "/missing.ppm"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("dataset of one triplet writes 3 ppm, 1 pfm and a manifest") {
    const std::string dir = temp_dir("maskdepth_ds1");
    make_dataset(quick_spec(1), 1, dir);
    int ppm_count = 0, pfm_count = 0;
    for (const auto& e : fs::directory_iterator(dir + "/frames")) {
        (void)e;
        ++ppm_count;
    }
    for (const auto& e : fs::directory_iterator(dir + "/depth")) {
        (void)e;
        ++pfm_count;
    }
    CHECK(ppm_count == 3);
    CHECK(pfm_count == 1);
    CHECK(fs::exists(dir + "/manifest.txt"));

    Dataset ds = Dataset::load(dir);
    CHECK(ds.n_triplets() == 1);
    fs::remove_all(dir);
}

TEST_CASE("triplet poses compose consistently") {
    const std::string dir = temp_dir("maskdepth_ds_poses");
    make_dataset(quick_spec(5), 12, dir);
    Dataset ds = Dataset::load(dir);
    REQUIRE(ds.n_triplets() == 12);
    // chaining {I-1 -> I0} then {I0 -> I1} must match the direct transform
    for (int64_t c = 1; c + 1 < ds.n_frames(); ++c) {
        const auto t01 = relative_transform(ds.camera_to_world(c - 1), ds.camera_to_world(c));
        const auto t12 = relative_transform(ds.camera_to_world(c), ds.camera_to_world(c + 1));
        const auto direct = relative_transform(ds.camera_to_world(c - 1), ds.camera_to_world(c + 1));
        const auto chained = t12.compose(t01);
        for (int i = 0; i < 9; ++i) CHECK(std::abs(chained.rot[i] - direct.rot[i]) < 1e-9);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(chained.trans[i] - direct.trans[i]) < 1e-9);
    }
    fs::remove_all(dir);
}

TEST_CASE("ground truth warp reproduces the target frame") {
    const std::string dir = temp_dir("maskdepth_ds_warp");
    make_dataset(quick_spec(6), 8, dir);
    Dataset ds = Dataset::load(dir);
    std::vector<double> residuals;
    for (int64_t i = 0; i < ds.n_triplets(); ++i) {
        Triplet t = ds.triplet(i);
        Tensor depth = Tensor::from_data({t.K.height, t.K.width}, t.gt_depth);
        // warp the previous frame into the target view
        Pose to_prev = Pose::from_rigid(t.t_prev_to_target.inverse());
        WarpResult w = synthesize_target(to_tensor(t.prev), depth, to_prev, t.K);
        Tensor target = to_tensor(t.target);
        for (size_t px = 0; px < w.validity.size(); ++px) {
            if (!w.validity[px]) continue;
            double l1 = 0;
            for (int c = 0; c < 3; ++c) {
                l1 += std::abs(w.image.at(px * 3 + c) - target.at(px * 3 + c));
            }
            residuals.push_back(l1 / 3.0);
        }
    }
    REQUIRE(residuals.size() > 1000);
    CHECK(median_of(residuals) < 0.02);
    fs::remove_all(dir);
}

TEST_CASE("warp inverse consistency away from disocclusions") {
    const std::string dir = temp_dir("maskdepth_ds_inv");
    make_dataset(quick_spec(7), 4, dir);
    Dataset ds = Dataset::load(dir);
    std::vector<double> residuals;
    for (int64_t i = 0; i < ds.n_triplets(); ++i) {
        Triplet t = ds.triplet(i);
        Tensor depth = Tensor::from_data({t.K.height, t.K.width}, t.gt_depth);
        Pose fwd = Pose::from_rigid(t.t_target_to_next);
        WarpResult once = synthesize_target(to_tensor(t.next), depth, fwd, t.K);
        // warping the result back with the inverse pose uses the same target
        // depth; compare against the original next frame sampling chain
        WarpResult twice = synthesize_target(once.image, depth, fwd.inverse(), t.K);
        Tensor target = to_tensor(t.target);
        for (size_t px = 0; px < twice.validity.size(); ++px) {
            if (!twice.validity[px] || !once.validity[px]) continue;
            double l1 = 0;
            for (int c = 0; c < 3; ++c) {
                l1 += std::abs(twice.image.at(px * 3 + c) - target.at(px * 3 + c));
            }
            residuals.push_back(l1 / 3.0);
        }
    }
    REQUIRE(!residuals.empty());
    CHECK(median_of(residuals) < 0.05);
    fs::remove_all(dir);
}

TEST_CASE("ground truth geometry scores a lower depth loss than a corrupted depth") {
    const std::string dir = temp_dir("maskdepth_ds_loss");
    make_dataset(quick_spec(8), 4, dir);
    Dataset ds = Dataset::load(dir);
    LossWeights weights;
    double loss_gt = 0.0, loss_bad = 0.0;
    for (int64_t i = 0; i < ds.n_triplets(); ++i) {
        Triplet t = ds.triplet(i);
        Tensor depth = Tensor::from_data({t.K.height, t.K.width}, t.gt_depth);
        std::vector<double> doubled(t.gt_depth);
        for (auto& d : doubled) d *= 2.0;
        Tensor depth2 = Tensor::from_data({t.K.height, t.K.width}, doubled);
        Pose to_prev = Pose::from_rigid(t.t_prev_to_target.inverse());
        Pose to_next = Pose::from_rigid(t.t_target_to_next);
        Tensor target = to_tensor(t.target);
        Tensor prev = to_tensor(t.prev);
        Tensor next = to_tensor(t.next);
        loss_gt += depth_loss(target, prev, next, depth, to_prev, to_next, t.K, weights)
                       .total.value();
        loss_bad += depth_loss(target, prev, next, depth2, to_prev, to_next, t.K, weights)
                        .total.value();
    }
    CHECK(loss_gt < loss_bad);
    fs::remove_all(dir);
}
