#include "maskdepth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "maskdepth/rng.hpp"

namespace maskdepth {

namespace fs = std::filesystem;

Intrinsics SceneSpec::intrinsics() const {
    Intrinsics K;
    K.fx = K.fy = static_cast<double>(width);
    K.cx = (width - 1) / 2.0;
    K.cy = (height - 1) / 2.0;
    K.width = width;
    K.height = height;
    return K;
}

RigidTransform SceneSpec::camera_to_world(int frame) const {
    const double phase = 2.0 * M_PI * frame / sway_period;
    const double yaw = yaw_amplitude * std::sin(phase + 0.8);
    RigidTransform rt = RigidTransform::from_axis_angle({0.0, yaw, 0.0}, {0, 0, 0});
    rt.trans = {sway_amplitude * std::sin(phase), 0.0, forward_speed * frame};
    return rt;
}

namespace {

struct Box {
    std::array<double, 3> lo, hi;
    std::array<double, 3> albedo;
    double phase;
};

struct World {
    std::vector<Box> boxes;
    double tex_phase[4];
};

World build_world(const SceneSpec& spec, int episode) {
    World world;
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(episode), 0xb0e5));
    for (int i = 0; i < 4; ++i) world.tex_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    world.boxes.reserve(spec.n_boxes);
    for (int i = 0; i < spec.n_boxes; ++i) {
        const double z = rng.uniform(spec.box_near, spec.box_far);
        const double x = rng.uniform(-0.45 * z - 0.08, 0.45 * z + 0.08);
        const double sx = rng.uniform(0.05, 0.14);
        const double sy = rng.uniform(0.05, 0.15);
        const double sz = rng.uniform(0.05, 0.14);
        Box b;
        b.lo = {x - sx / 2, spec.ground_y - sy, z - sz / 2};
        b.hi = {x + sx / 2, spec.ground_y, z + sz / 2};
        b.albedo = {rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9)};
        b.phase = rng.uniform(0.0, 2.0 * M_PI);
        world.boxes.push_back(b);
    }
    return world;
}

// t along the ray equals camera z-depth because ray directions carry z = 1
// in camera coordinates.
double intersect_box(const Box& b, const std::array<double, 3>& o,
                     const std::array<double, 3>& d) {
    double t_enter = -1e30, t_exit = 1e30;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12) {
            if (o[a] < b.lo[a] || o[a] > b.hi[a]) return -1.0;
            continue;
        }
        double t0 = (b.lo[a] - o[a]) / d[a];
        double t1 = (b.hi[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_enter > t_exit || t_exit < 0.0) return -1.0;
    return t_enter > 1e-6 ? t_enter : -1.0;
}

// Octaves spread over world frequencies so every depth sees usable image
// frequency; the finest octave stays small since it aliases on far surfaces.
double octave_pattern(double u, double v, const double* phase, double f) {
    double value = 0.34 * std::sin(f * 2.0 * u + phase[0]) * std::sin(f * 1.7 * v + phase[1]);
    value += 0.20 * std::sin(f * 5.3 * u + 1.7 * phase[2]) * std::sin(f * 4.6 * v + phase[0]);
    value += 0.08 * std::sin(f * 13.0 * u + 2.3 * phase[3]) * std::sin(f * 11.0 * v + phase[1]);
    return value;
}

std::array<double, 3> ground_color(const SceneSpec& spec, const World& w, double x, double z) {
    const double f = spec.texture_frequency;
    const double a = octave_pattern(x, z, w.tex_phase, f);
    const double b = std::sin(f * 1.1 * (x + z) + w.tex_phase[2]);
    return {0.5 + 0.42 * a, 0.5 + 0.3 * a + 0.14 * b, 0.45 + 0.26 * b + 0.2 * a};
}

std::array<double, 3> wall_color(const SceneSpec& spec, const World& w, double x, double y) {
    const double f = spec.texture_frequency;
    const double a = octave_pattern(x + 3.1, y, w.tex_phase, 0.8 * f);
    const double b = std::cos(f * 1.3 * x - f * 1.0 * y + w.tex_phase[3]);
    return {0.45 + 0.26 * b + 0.16 * a, 0.5 + 0.4 * a, 0.5 + 0.25 * a + 0.15 * b};
}

std::array<double, 3> box_color(const SceneSpec& spec, const Box& box,
                                const std::array<double, 3>& p) {
    const double f = spec.texture_frequency;
    const double m = 0.7 + 0.3 * std::sin(f * 9.0 * (p[0] + p[1] + p[2]) + box.phase);
    return {box.albedo[0] * m, box.albedo[1] * m, box.albedo[2] * m};
}

}  // namespace

RenderedFrame render_scene(const SceneSpec& spec, int episode, int frame) {
    const Intrinsics K = spec.intrinsics();
    K.validate();
    const World world = build_world(spec, episode);
    const RigidTransform cam = spec.camera_to_world(frame);
    RenderedFrame out;
    out.image = Image(spec.height, spec.width, 3);
    out.depth.assign(static_cast<size_t>(spec.height) * spec.width, 0.0);

    const std::array<double, 3> origin = cam.trans;
    for (int v = 0; v < spec.height; ++v) {
        for (int u = 0; u < spec.width; ++u) {
            const std::array<double, 3> dir_cam{(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0};
            std::array<double, 3> d{};
            for (int i = 0; i < 3; ++i) {
                d[i] = cam.rot[i * 3 + 0] * dir_cam[0] + cam.rot[i * 3 + 1] * dir_cam[1] +
                       cam.rot[i * 3 + 2] * dir_cam[2];
            }
            double best_t = 1e30;
            int hit = -1;  // 0 ground, 1 wall, 2+ box index
            if (d[1] > 1e-9) {
                const double t = (spec.ground_y - origin[1]) / d[1];
                if (t > 1e-6 && t < best_t) {
                    best_t = t;
                    hit = 0;
                }
            }
            if (d[2] > 1e-9) {
                const double t = (spec.wall_z - origin[2]) / d[2];
                if (t > 1e-6 && t < best_t) {
                    best_t = t;
                    hit = 1;
                }
            }
            for (size_t b = 0; b < world.boxes.size(); ++b) {
                const double t = intersect_box(world.boxes[b], origin, d);
                if (t > 0.0 && t < best_t) {
                    best_t = t;
                    hit = static_cast<int>(b) + 2;
                }
            }
            if (hit < 0) {
                // trajectory bounds keep every ray on a surface
                throw std::logic_error("render_scene: ray escaped the scene");
            }
            const std::array<double, 3> p{origin[0] + best_t * d[0], origin[1] + best_t * d[1],
                                          origin[2] + best_t * d[2]};
            std::array<double, 3> rgb;
            if (hit == 0) {
                rgb = ground_color(spec, world, p[0], p[2]);
            } else if (hit == 1) {
                rgb = wall_color(spec, world, p[0], p[1]);
            } else {
                rgb = box_color(spec, world.boxes[hit - 2], p);
            }
            for (int c = 0; c < 3; ++c) {
                out.image.at(v, u, c) = std::min(1.0, std::max(0.0, rgb[c]));
            }
            out.depth[static_cast<size_t>(v) * spec.width + u] = best_t;
        }
    }
    return out;
}

RigidTransform relative_transform(const RigidTransform& cam_to_world_a,
                                  const RigidTransform& cam_to_world_b) {
    return cam_to_world_b.inverse().compose(cam_to_world_a);
}

namespace {

std::string frame_name(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
    return buf;
}

}  // namespace

void make_dataset(const SceneSpec& spec, int n_triplets, const std::string& dir) {
    if (n_triplets < 1) throw std::invalid_argument("make_dataset needs n >= 1 triplets");
    const int ep_len = spec.episode_length();
    const int per_episode = spec.episode_triplets;
    const int episodes = (n_triplets + per_episode - 1) / per_episode;

    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "depth");

    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write manifest: " + dir);
    manifest.precision(17);
    const Intrinsics K = spec.intrinsics();
    manifest << "format=maskdepth-dataset-v1\n";
    manifest << "width=" << K.width << "\nheight=" << K.height << "\n";
    manifest << "fx=" << K.fx << "\nfy=" << K.fy << "\ncx=" << K.cx << "\ncy=" << K.cy << "\n";
    manifest << "episode_length=" << ep_len << "\n";

    int64_t frame_id = 0;
    int triplets_left = n_triplets;
    std::ostringstream pose_rows;
    pose_rows.precision(17);
    for (int ep = 0; ep < episodes; ++ep) {
        const int triplets_here = std::min(per_episode, triplets_left);
        const int frames_here = triplets_here + 2;
        triplets_left -= triplets_here;
        for (int f = 0; f < frames_here; ++f, ++frame_id) {
            const RenderedFrame rendered = render_scene(spec, ep, f);
            write_ppm((fs::path(dir) / "frames" / (frame_name(frame_id) + ".ppm")).string(),
                      rendered.image);
            const bool is_center = f >= 1 && f <= triplets_here;
            if (is_center) {
                write_pfm((fs::path(dir) / "depth" / (frame_name(frame_id) + ".pfm")).string(),
                          rendered.depth, spec.height, spec.width);
            }
            const RigidTransform cam = spec.camera_to_world(f);
            const auto aa = cam.axis_angle();
            pose_rows << "pose " << frame_id << " " << aa[0] << " " << aa[1] << " " << aa[2]
                      << " " << cam.trans[0] << " " << cam.trans[1] << " " << cam.trans[2]
                      << "\n";
        }
    }
    manifest << "frames=" << frame_id << "\n" << pose_rows.str();
    if (!manifest) throw std::runtime_error("manifest write failed: " + dir);
}

Dataset Dataset::load(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open manifest: " + dir + "/manifest.txt");
    Dataset ds;
    int64_t n_frames = -1;
    std::string line;
    std::vector<std::array<double, 6>> poses;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("pose ", 0) == 0) {
            std::istringstream is(line.substr(5));
            int64_t idx;
            std::array<double, 6> p{};
            is >> idx >> p[0] >> p[1] >> p[2] >> p[3] >> p[4] >> p[5];
            if (!is) throw std::runtime_error("malformed pose row: " + line);
            if (static_cast<size_t>(idx) >= poses.size()) poses.resize(idx + 1);
            poses[idx] = p;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "width") ds.K_.width = std::stoi(value);
        else if (key == "height") ds.K_.height = std::stoi(value);
        else if (key == "fx") ds.K_.fx = std::stod(value);
        else if (key == "fy") ds.K_.fy = std::stod(value);
        else if (key == "cx") ds.K_.cx = std::stod(value);
        else if (key == "cy") ds.K_.cy = std::stod(value);
        else if (key == "episode_length") ds.episode_length_ = std::stoi(value);
        else if (key == "frames") n_frames = std::stoll(value);
    }
    ds.K_.validate();
    if (n_frames <= 0 || ds.episode_length_ < 3) {
        throw std::runtime_error("manifest missing frames/episode_length: " + dir);
    }
    ds.frames_.reserve(n_frames);
    ds.depths_.resize(n_frames);
    ds.cam_to_world_.reserve(n_frames);
    for (int64_t i = 0; i < n_frames; ++i) {
        const std::string ppm = (fs::path(dir) / "frames" / (frame_name(i) + ".ppm")).string();
        ds.frames_.push_back(read_ppm(ppm));
        const std::string pfm = (fs::path(dir) / "depth" / (frame_name(i) + ".pfm")).string();
        if (fs::exists(pfm)) {
            int h = 0, w = 0;
            ds.depths_[i] = read_pfm(pfm, h, w);
            if (h != ds.K_.height || w != ds.K_.width) {
                throw std::runtime_error("depth size mismatch: " + pfm);
            }
        }
        ds.cam_to_world_.push_back(
            RigidTransform::from_axis_angle({poses[i][0], poses[i][1], poses[i][2]},
                                            {poses[i][3], poses[i][4], poses[i][5]}));
    }
    // Triplets never straddle episode boundaries; the last episode may be short.
    for (int64_t start = 0; start < n_frames; start += ds.episode_length_) {
        const int64_t len = std::min<int64_t>(ds.episode_length_, n_frames - start);
        for (int64_t c = start + 1; c + 1 < start + len; ++c) {
            if (!ds.depths_[c].empty()) ds.triplet_index_.push_back(c);
        }
    }
    if (ds.triplet_index_.empty()) throw std::runtime_error("dataset has no triplets: " + dir);
    return ds;
}

Triplet Dataset::triplet(int64_t i) const {
    if (i < 0 || i >= n_triplets()) throw std::out_of_range("triplet index out of range");
    const int64_t c = triplet_index_[i];
    Triplet t;
    t.prev = frames_[c - 1];
    t.target = frames_[c];
    t.next = frames_[c + 1];
    t.gt_depth = depths_[c];
    t.t_prev_to_target = relative_transform(cam_to_world_[c - 1], cam_to_world_[c]);
    t.t_target_to_next = relative_transform(cam_to_world_[c], cam_to_world_[c + 1]);
    t.K = K_;
    return t;
}

const std::vector<double>& Dataset::depth_of_center(int64_t triplet) const {
    return depths_[triplet_index_[triplet]];
}

}  // namespace maskdepth
