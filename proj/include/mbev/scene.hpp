// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mbev/common.hpp"
#include "mbev/geometry.hpp"
#include "mbev/rig.hpp"

namespace mbev {

// Ground-truth box in the ego frame at the current timestep.
struct Object3D {
  Vec3 center;            // meters
  double length = 1, width = 1, height = 1;
  double yaw = 0;         // radians, in (-pi, pi]
  double vx = 0, vy = 0;  // m/s in the ego frame
  int class_id = 0;

  void validate(int num_classes) const;
};

struct Scene {
  int scene_id = 0;
  std::vector<Object3D> objects;
  EgoMotion ego_motion;
};

struct SceneParams {
  int n_objects_min = 3;
  int n_objects_max = 7;
  int n_classes = 4;
  double world_radius_m = 22.0;
  double speed_max_mps = 6.0;
  double ego_speed_max_mps = 3.0;
  double min_radius_m = 4.0;  // keep boxes off the ego itself
};

// Time between the two frames; matches 2 Hz keyframing.
inline constexpr double kFrameDt = 0.5;

// Deterministic in (rng state, params). Every object is visible in at least
// one camera at the current timestep; placement rejection-samples with a
// bounded retry budget.
Scene sample_scene(Rng& rng, const SceneParams& params, const Rig& rig,
                   int scene_id);

// Object pose at the previous timestep, expressed in the previous ego frame:
// constant-velocity rollback plus ego-motion compensation.
struct ObjectPosePrev {
  Vec3 center;
  double yaw;
};
ObjectPosePrev object_at_prev(const Object3D& obj, const EgoMotion& ego);

}  // namespace mbev
