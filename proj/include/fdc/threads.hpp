#pragma once

namespace fdc {

/// Cap internal parallelism from the FLODCAST_THREADS environment variable
/// (default: hardware concurrency). Call once at process start.
void init_threads();

int thread_count();

}  // namespace fdc
