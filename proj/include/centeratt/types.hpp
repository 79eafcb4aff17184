#pragma once

#include <cmath>
#include <cstdint>

namespace centeratt {

// LiDAR return. Feature layout is fixed to (x, y, z, intensity).
struct Point {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;
};

enum class ObjectClass : int32_t {
    kVehicle = 0,
    kPedestrian = 1,
    kCyclist = 2,
};
constexpr int kNumClasses = 3;

const char* class_name(ObjectClass c);
ObjectClass class_from_id(int id);

// Wrap an angle into [-pi, pi).
inline double wrap_angle(double a) {
    const double two_pi = 2.0 * M_PI;
    a = std::fmod(a + M_PI, two_pi);
    if (a < 0.0) a += two_pi;
    return a - M_PI;
}

// Oriented 3D box: center, sizes (l along heading), yaw CCW from +x.
// Ground truth carries score 1.
struct Box3D {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double l = 1.0, w = 1.0, h = 1.0;
    double yaw = 0.0;
    ObjectClass cls = ObjectClass::kVehicle;
    double score = 1.0;

    double bev_diag() const { return std::sqrt(l * l + w * w); }
};

}  // namespace centeratt
