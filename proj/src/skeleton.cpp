#include "pfm/skeleton.hpp"

#include <cmath>
#include <numbers>

#include "pfm/errors.hpp"

namespace pfm {

namespace {

constexpr float kDegToRad = std::numbers::pi_v<float> / 180.0f;

}  // namespace

std::string_view joint_name(int joint) {
  static constexpr std::string_view names[] = {"nose",        "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
                                               "l_wrist",     "r_wrist",    "l_hip",      "r_hip"};
  if (joint < 0 || joint >= kNumJoints) throw ParamError("joint index out of range: " + std::to_string(joint));
  return names[joint];
}

SkeletonModel SkeletonModel::standard() {
  SkeletonModel m;
  // Order matters: a parent always precedes its children.
  m.bones = {
      {"spine", -1, 24.0f, -90.0f, -1},
      {"neck_nose", 0, 9.0f, 0.0f, kNose},
      {"l_collar", 0, 10.0f, 90.0f, kLeftShoulder},
      {"r_collar", 0, 10.0f, -90.0f, kRightShoulder},
      {"l_upper_arm", 2, 13.0f, 80.0f, kLeftElbow},
      {"l_forearm", 4, 12.0f, 0.0f, kLeftWrist},
      {"r_upper_arm", 3, 13.0f, -80.0f, kRightElbow},
      {"r_forearm", 6, 12.0f, 0.0f, kRightWrist},
      {"l_pelvis", -1, 7.0f, 0.0f, kLeftHip},
      {"r_pelvis", -1, 7.0f, 180.0f, kRightHip},
      {"l_thigh", 8, 14.0f, 90.0f, -1},
      {"l_shin", 10, 14.0f, 0.0f, -1},
      {"r_thigh", 9, 14.0f, -90.0f, -1},
      {"r_shin", 12, 14.0f, 0.0f, -1},
  };
  return m;
}

int SkeletonModel::bone_index(std::string_view name) const {
  for (std::size_t i = 0; i < bones.size(); ++i)
    if (bones[i].name == name) return static_cast<int>(i);
  throw NotFoundError("unknown bone '" + std::string(name) + "'");
}

SkeletonModel::Placement SkeletonModel::place(Point2 pelvis, const std::vector<float>& relative_angles) const {
  if (relative_angles.size() != bones.size())
    throw ShapeError("expected " + std::to_string(bones.size()) + " bone angles, got " +
                     std::to_string(relative_angles.size()));
  Placement out;
  out.pelvis = pelvis;
  out.bone_ends.resize(bones.size());
  out.joints.assign(kNumJoints, Point2{});
  std::vector<float> absolute(bones.size());
  for (std::size_t i = 0; i < bones.size(); ++i) {
    const Bone& b = bones[i];
    const Point2 start = b.parent < 0 ? pelvis : out.bone_ends[b.parent];
    absolute[i] = (b.parent < 0 ? 0.0f : absolute[b.parent]) + relative_angles[i];
    const float a = absolute[i] * kDegToRad;
    out.bone_ends[i] = {start.x + b.length * std::cos(a), start.y + b.length * std::sin(a)};
    if (b.joint >= 0) out.joints[b.joint] = out.bone_ends[i];
  }
  return out;
}

std::vector<float> ActionScript::angles(const SkeletonModel& model, float t, float clip_phase,
                                        float amplitude_scale) const {
  std::vector<float> out(model.bones.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = model.bones[i].rest_angle;
  const float omega = 2.0f * std::numbers::pi_v<float> * frequency;
  for (const BoneMotion& m : motions)
    out[m.bone] = m.center + amplitude_scale * m.amplitude * std::sin(omega * t + clip_phase + m.phase);
  return out;
}

float ActionScript::bob(float t, float clip_phase, float amplitude_scale) const {
  const float omega = 2.0f * std::numbers::pi_v<float> * frequency;
  return amplitude_scale * bob_amplitude * 0.5f * (1.0f - std::cos(omega * t + clip_phase));
}

std::vector<ActionScript> standard_actions(const SkeletonModel& m) {
  const float pi = std::numbers::pi_v<float>;
  auto bone = [&](const char* n) { return m.bone_index(n); };
  // Right-side limbs mirror the left ones by negating relative angles.
  auto both = [&](std::vector<BoneMotion>& v, const char* l, const char* r, float c, float a, float ph, float rph) {
    v.push_back({bone(l), c, a, ph});
    v.push_back({bone(r), -c, -a, rph});
  };

  std::vector<ActionScript> out;

  ActionScript wave{0, "wave", 1.0f / 12.0f, {}, 0.0f, 0.0f};
  wave.motions.push_back({bone("l_upper_arm"), -30.0f, 0.0f, 0.0f});
  wave.motions.push_back({bone("l_forearm"), -20.0f, 35.0f, 0.0f});
  out.push_back(wave);

  ActionScript squat{1, "squat", 1.0f / 16.0f, {}, 8.0f, 0.0f};
  // Thighs swing out and shins fold back as the pelvis drops.
  both(squat.motions, "l_thigh", "r_thigh", 65.0f, -25.0f, -pi / 2, -pi / 2);
  both(squat.motions, "l_shin", "r_shin", 35.0f, 35.0f, -pi / 2, -pi / 2);
  both(squat.motions, "l_upper_arm", "r_upper_arm", 50.0f, -30.0f, -pi / 2, -pi / 2);
  out.push_back(squat);

  ActionScript jack{2, "jack", 1.0f / 24.0f, {}, 0.0f, 0.0f};
  both(jack.motions, "l_upper_arm", "r_upper_arm", 20.0f, 60.0f, 0.0f, 0.0f);
  both(jack.motions, "l_forearm", "r_forearm", -10.0f, 10.0f, 0.0f, 0.0f);
  both(jack.motions, "l_thigh", "r_thigh", 75.0f, 15.0f, 0.0f, 0.0f);
  out.push_back(jack);

  ActionScript punch{3, "punch", 1.0f / 18.0f, {}, 0.0f, 0.0f};
  both(punch.motions, "l_upper_arm", "r_upper_arm", 45.0f, 35.0f, 0.0f, pi);
  both(punch.motions, "l_forearm", "r_forearm", -65.0f, -65.0f, 0.0f, pi);
  out.push_back(punch);
  return out;
}

const ActionScript& find_action(const std::vector<ActionScript>& actions, std::string_view name) {
  for (const ActionScript& a : actions)
    if (a.name == name) return a;
  throw NotFoundError("unknown action '" + std::string(name) + "'");
}

}  // namespace pfm
