#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "centeratt/types.hpp"

namespace centeratt {

// 8-component box refinement: center shifts scaled by half the BEV diagonal,
// log size ratios, residuals on (sin yaw, cos yaw). apply and invert are
// exact inverses up to rounding.
inline Box3D apply_box_deltas(const Box3D& box, const std::array<double, 8>& d) {
    Box3D out = box;
    const double half_diag = 0.5 * box.bev_diag();
    out.cx = box.cx + d[0] * half_diag;
    out.cy = box.cy + d[1] * half_diag;
    out.cz = box.cz + d[2] * half_diag;
    // log ratios clamped so untrained regression outputs stay finite
    out.l = box.l * std::exp(std::clamp(d[3], -10.0, 10.0));
    out.w = box.w * std::exp(std::clamp(d[4], -10.0, 10.0));
    out.h = box.h * std::exp(std::clamp(d[5], -10.0, 10.0));
    out.yaw = wrap_angle(std::atan2(std::sin(box.yaw) + d[6], std::cos(box.yaw) + d[7]));
    return out;
}

inline std::array<double, 8> box_deltas(const Box3D& box, const Box3D& target) {
    const double half_diag = 0.5 * box.bev_diag();
    return {
        (target.cx - box.cx) / half_diag,
        (target.cy - box.cy) / half_diag,
        (target.cz - box.cz) / half_diag,
        std::log(target.l / box.l),
        std::log(target.w / box.w),
        std::log(target.h / box.h),
        std::sin(target.yaw) - std::sin(box.yaw),
        std::cos(target.yaw) - std::cos(box.yaw),
    };
}

}  // namespace centeratt
