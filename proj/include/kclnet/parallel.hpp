#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kclnet {

enum class ExecMode { Serial, Parallel };

// Worker cap: hardware threads, optionally limited by KCLNET_THREADS.
inline int worker_count() {
    static const int cached = [] {
        int n = 1;
#ifdef _OPENMP
        n = omp_get_max_threads();
#endif
        if (const char* env = std::getenv("KCLNET_THREADS")) {
            int cap = std::atoi(env);
            if (cap >= 1) n = std::min(n, cap);
        }
        return n;
    }();
    return cached;
}

// Runs fn(i) for i in [0, n). Work items must be independent and write only
// to their own slots; under that contract both modes produce identical
// results and the serial mode stays usable as a reference in tests.
// Exceptions cannot cross an OpenMP region, so the first one is captured and
// rethrown afterwards.
template <class F>
void parallel_for(int n, ExecMode mode, F&& fn) {
#ifdef _OPENMP
    if (mode == ExecMode::Parallel && worker_count() > 1 && n > 1) {
        std::exception_ptr err;
        std::mutex err_mutex;
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace kclnet
