#pragma once

namespace centeratt {

// Resolves the worker count used by the parallel kernels. Priority:
// explicit request (CLI flag) > CENTERATT_WORKERS env var > default.
// Every kernel is bit-deterministic in its output regardless of the value.
int resolve_workers(int requested = 0, int fallback = 4);

}  // namespace centeratt
