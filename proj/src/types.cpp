#include "centeratt/types.hpp"

#include "centeratt/errors.hpp"

namespace centeratt {

const char* class_name(ObjectClass cls) {
    switch (cls) {
        case ObjectClass::kVehicle: return "vehicle";
        case ObjectClass::kPedestrian: return "pedestrian";
        case ObjectClass::kCyclist: return "cyclist";
    }
    return "unknown";
}

ObjectClass class_from_id(int id) {
    if (id < 0 || id >= kNumClasses) {
        throw ConfigError("class id " + std::to_string(id) + " outside [0, " +
                          std::to_string(kNumClasses) + ")");
    }
    return static_cast<ObjectClass>(id);
}

}  // namespace centeratt
