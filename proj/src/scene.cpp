// SPDX-License-Identifier: Apache-2.0
#include "mbev/scene.hpp"

#include <cmath>

namespace mbev {

void Object3D::validate(int num_classes) const {
  MBEV_CHECK(length > 0 && width > 0 && height > 0, Err::BadConfig,
             "object size components must be positive");
  MBEV_CHECK(yaw > -M_PI - 1e-12 && yaw <= M_PI + 1e-12, Err::BadConfig,
             "object yaw out of (-pi, pi]");
  MBEV_CHECK(class_id >= 0 && class_id < num_classes, Err::BadConfig,
             "object class out of range");
}

namespace {

std::array<Vec3, 8> box_corners(const Vec3& c, double l, double w, double h,
                                double yaw) {
  std::array<Vec3, 8> out;
  const Mat3 r = Mat3::rot_z(yaw);
  int k = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) {
        const Vec3 local{sx * l / 2, sy * w / 2, sz * h / 2};
        out[k++] = c + r * local;
      }
  return out;
}

bool visible_somewhere(const Object3D& obj, const Rig& rig) {
  const auto corners =
      box_corners(obj.center, obj.length, obj.width, obj.height, obj.yaw);
  for (const auto& cam : rig.cameras) {
    if (project_point(cam, obj.center)) return true;
    for (const auto& p : corners)
      if (project_point(cam, p)) return true;
  }
  return false;
}

}  // namespace

Scene sample_scene(Rng& rng, const SceneParams& params, const Rig& rig,
                   int scene_id) {
  MBEV_CHECK(params.n_objects_min >= 0 &&
                 params.n_objects_max >= params.n_objects_min,
             Err::BadConfig, "object count range");
  MBEV_CHECK(params.n_classes >= 1, Err::BadConfig, "need at least one class");

  Scene scene;
  scene.scene_id = scene_id;

  const double ego_speed = rng.uniform(0.0, params.ego_speed_max_mps);
  scene.ego_motion.dpsi = rng.uniform(-0.08, 0.08);
  // Driving forward: the previous ego origin sits behind the current one.
  scene.ego_motion.dx = -ego_speed * kFrameDt;
  scene.ego_motion.dy = rng.uniform(-0.2, 0.2);

  const int n_objects = params.n_objects_min +
                        rng.uniform_int(params.n_objects_max - params.n_objects_min + 1);
  for (int i = 0; i < n_objects; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Object3D obj;
      const double radius = rng.uniform(params.min_radius_m, params.world_radius_m);
      const double theta = rng.uniform(-M_PI, M_PI);
      obj.length = rng.uniform(2.5, 5.0);
      obj.width = rng.uniform(1.4, 2.2);
      obj.height = rng.uniform(1.2, 2.0);
      obj.center = {radius * std::cos(theta), radius * std::sin(theta),
                    obj.height / 2};
      obj.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
      const double speed = rng.uniform(0.0, params.speed_max_mps);
      const double heading = rng.uniform(-M_PI, M_PI);
      obj.vx = speed * std::cos(heading);
      obj.vy = speed * std::sin(heading);
      obj.class_id = rng.uniform_int(params.n_classes);
      obj.validate(params.n_classes);
      if (visible_somewhere(obj, rig)) {
        scene.objects.push_back(obj);
        placed = true;
      }
    }
    MBEV_CHECK(placed, Err::SamplingFailed,
               "could not place a visible object within the retry budget");
  }
  return scene;
}

ObjectPosePrev object_at_prev(const Object3D& obj, const EgoMotion& ego) {
  const Vec3 world_prev = {obj.center.x - obj.vx * kFrameDt,
                           obj.center.y - obj.vy * kFrameDt, obj.center.z};
  ObjectPosePrev out;
  out.center = ego.cur_to_prev(world_prev);
  out.yaw = wrap_angle(obj.yaw - ego.dpsi);
  return out;
}

}  // namespace mbev
