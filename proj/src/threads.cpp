#include "fdc/threads.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace fdc {

namespace {
int g_threads = 0;
}

void init_threads() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("FLODCAST_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    g_threads = n;
    Eigen::setNbThreads(n);
}

int thread_count() { return g_threads > 0 ? g_threads : 1; }

}  // namespace fdc
