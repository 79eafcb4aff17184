#include "centeratt/workers.hpp"

#include <cstdlib>
#include <string>

namespace centeratt {

int resolve_workers(int requested, int fallback) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CENTERATT_WORKERS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
            // malformed env value falls through to the default
        }
    }
    return fallback > 0 ? fallback : 1;
}

}  // namespace centeratt
