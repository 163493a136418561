#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdepth/geometry.hpp"
#include "maskdepth/image.hpp"

namespace maskdepth {

/// Procedural world: a textured ground plane, a back wall and a set of boxes,
/// viewed by a forward-moving, gently swaying camera. Every ray hits a
/// surface, so depth is defined everywhere. Datasets are built from short
/// episodes; each episode re-rolls the box layout from a derived seed.
struct SceneSpec {
    uint64_t seed = 0;
    int width = 64;
    int height = 64;
    int n_boxes = 7;
    double ground_y = 0.12;   // camera height above the ground plane
    double wall_z = 1.5;      // back wall distance at episode start
    double box_near = 0.35;   // box placement depth range
    double box_far = 1.15;
    double texture_frequency = 2.2;
    int episode_triplets = 10;

    double forward_speed = 0.02;  // scene units per frame
    double sway_amplitude = 0.025;
    double sway_period = 9.0;  // frames
    double yaw_amplitude = 0.03;

    Intrinsics intrinsics() const;
    /// Camera-to-world pose of a frame within its episode.
    RigidTransform camera_to_world(int frame) const;
    int episode_length() const { return episode_triplets + 2; }
};

struct RenderedFrame {
    Image image;
    std::vector<double> depth;  // camera z-depth per pixel
};

/// Ray-cast render of one frame. `episode` selects the box layout,
/// `frame` the position along the episode trajectory.
RenderedFrame render_scene(const SceneSpec& spec, int episode, int frame);

struct Triplet {
    Image prev, target, next;
    std::vector<double> gt_depth;       // of the target frame
    RigidTransform t_prev_to_target;    // relative pose of pair {I-1, I0}
    RigidTransform t_target_to_next;    // relative pose of pair {I0, I1}
    Intrinsics K;
};

class Dataset {
public:
    /// Loads a dataset directory written by make_dataset.
    static Dataset load(const std::string& dir);

    int64_t n_triplets() const { return static_cast<int64_t>(triplet_index_.size()); }
    Triplet triplet(int64_t i) const;
    int64_t center_frame(int64_t triplet) const { return triplet_index_[triplet]; }
    const Intrinsics& intrinsics() const { return K_; }
    int64_t n_frames() const { return static_cast<int64_t>(frames_.size()); }
    const Image& frame(int64_t i) const { return frames_[i]; }
    const std::vector<double>& depth_of_center(int64_t triplet) const;
    const RigidTransform& camera_to_world(int64_t frame) const { return cam_to_world_[frame]; }

private:
    Intrinsics K_;
    int episode_length_ = 0;
    std::vector<Image> frames_;
    std::vector<std::vector<double>> depths_;  // empty for non-center frames
    std::vector<RigidTransform> cam_to_world_;
    std::vector<int64_t> triplet_index_;  // center frame per triplet
};

/// Renders and writes frames/%06d.ppm, depth/%06d.pfm for triplet centers,
/// and manifest.txt. Throws with the offending path on I/O failure.
void make_dataset(const SceneSpec& spec, int n_triplets, const std::string& dir);

/// Relative transform taking camera-a coordinates to camera-b coordinates.
RigidTransform relative_transform(const RigidTransform& cam_to_world_a,
                                  const RigidTransform& cam_to_world_b);

}  // namespace maskdepth
