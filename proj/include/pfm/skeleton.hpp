#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "pfm/geometry.hpp"

namespace pfm {

// Annotated joints, in annotation order.
enum Joint : int {
  kNose = 0,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kNumJoints
};

std::string_view joint_name(int joint);

// A bone hangs off the end point of its parent bone (or the pelvis for
// parent == -1). Its absolute angle is the parent's absolute angle plus the
// relative angle; angles are in degrees in image coordinates (y down).
struct Bone {
  std::string name;
  int parent = -1;
  float length = 0.0f;
  float rest_angle = 0.0f;
  int joint = -1;  // annotated joint at the bone's end, or -1
};

// Figure rooted at the hip midpoint (pelvis). Left limbs extend toward +x.
struct SkeletonModel {
  std::vector<Bone> bones;
  float head_radius = 4.5f;
  float limb_half_width = 2.0f;

  static SkeletonModel standard();
  int bone_index(std::string_view name) const;

  struct Placement {
    std::vector<Point2> bone_ends;  // end point of every bone
    Point2 pelvis;
    Pose joints;  // the K annotated joints
  };
  // Forward kinematics for the given relative angles (one per bone).
  Placement place(Point2 pelvis, const std::vector<float>& relative_angles) const;
};

// Periodic motion of one bone: relative angle = center + amplitude*sin(phase(t)).
struct BoneMotion {
  int bone = 0;
  float center = 0.0f;
  float amplitude = 0.0f;
  float phase = 0.0f;  // radians, added to the clip phase
};

struct ActionScript {
  int id = 0;
  std::string name;
  float frequency = 1.0f / 12.0f;  // cycles per frame
  std::vector<BoneMotion> motions;
  float bob_amplitude = 0.0f;  // vertical pelvis oscillation, px
  float velocity_x = 0.0f;     // px per frame

  // Relative angles for every bone at time t (frames).
  std::vector<float> angles(const SkeletonModel& model, float t, float clip_phase, float amplitude_scale) const;
  float bob(float t, float clip_phase, float amplitude_scale) const;
};

// Built-in action library: wave, squat, jack, punch.
std::vector<ActionScript> standard_actions(const SkeletonModel& model);
const ActionScript& find_action(const std::vector<ActionScript>& actions, std::string_view name);

}  // namespace pfm
