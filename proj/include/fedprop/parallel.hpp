#pragma once

#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedprop {

// Every parallel kernel in the library takes one of these.  Exec::serial is
// the reference path used by the equivalence tests and the benchmark; both
// paths must produce bitwise-identical results.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename Fn>
void for_each_index(std::size_t begin, std::size_t end, Exec exec, Fn&& fn) {
#ifdef _OPENMP
    if (exec == Exec::parallel) {
        const auto lo = static_cast<std::int64_t>(begin);
        const auto hi = static_cast<std::int64_t>(end);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = lo; i < hi; ++i) fn(static_cast<std::size_t>(i));
        return;
    }
#endif
    for (std::size_t i = begin; i < end; ++i) fn(i);
}

}  // namespace fedprop
