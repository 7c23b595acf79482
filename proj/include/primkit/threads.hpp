#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

namespace primkit {

// Worker parallelism cap: PRIMKIT_THREADS if set, else hardware concurrency.
inline int worker_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PRIMKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

}  // namespace primkit
