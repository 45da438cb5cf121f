#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include <omp.h>

namespace coepg {

/// Thread count for the OpenMP kernels. jobs <= 1 selects the serial path.
struct Exec {
    int jobs = 1;
};

inline void set_default_jobs(int jobs)
{
    if (jobs > 0)
        omp_set_num_threads(jobs);
}

/// Runs body(i) for i in [0, n) on `jobs` OpenMP threads. Each index must write
/// only to its own output slot. The first exception thrown by any body is
/// rethrown on the calling thread after the loop finishes.
template <class Body>
void parallel_for(std::size_t n, int jobs, Body&& body)
{
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace coepg
