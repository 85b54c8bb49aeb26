#pragma once

#include <array>
#include <string_view>

namespace p3d::pose {

inline constexpr int kNumJoints = 17;

// Human 3.6m-style joint convention.
enum Joint : int {
    kPelvis = 0,
    kLeftHip = 1,
    kLeftKnee = 2,
    kLeftAnkle = 3,
    kRightHip = 4,
    kRightKnee = 5,
    kRightAnkle = 6,
    kSpine = 7,
    kThorax = 8,
    kNeck = 9,
    kHead = 10,
    kLeftShoulder = 11,
    kLeftElbow = 12,
    kLeftWrist = 13,
    kRightShoulder = 14,
    kRightElbow = 15,
    kRightWrist = 16,
};

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis",     "left_hip",      "left_knee",  "left_ankle", "right_hip",
    "right_knee", "right_ankle",   "spine",      "thorax",     "neck",
    "head",       "left_shoulder", "left_elbow", "left_wrist", "right_shoulder",
    "right_elbow", "right_wrist",
};

// parent[j] for the kinematic tree rooted at the pelvis (parent[0] == -1)
inline constexpr std::array<int, kNumJoints> kJointParent = {
    -1,       // pelvis
    kPelvis,  // left_hip
    kLeftHip, kLeftKnee,
    kPelvis,  // right_hip
    kRightHip, kRightKnee,
    kPelvis,  // spine
    kSpine,   // thorax
    kThorax,  // neck
    kNeck,    // head
    kThorax,  // left_shoulder
    kLeftShoulder, kLeftElbow,
    kThorax,  // right_shoulder
    kRightShoulder, kRightElbow,
};

// The six stable edges used for scale recovery.
inline constexpr std::array<std::pair<int, int>, 6> kTorsoEdges = {{
    {kPelvis, kSpine},
    {kSpine, kThorax},
    {kThorax, kLeftShoulder},
    {kThorax, kRightShoulder},
    {kPelvis, kLeftHip},
    {kPelvis, kRightHip},
}};

}  // namespace p3d::pose
