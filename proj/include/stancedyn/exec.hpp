#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Execution helpers for the data-parallel kernels. Every kernel in the
// library is written against these wrappers so that the same code path can
// run serially (the reference used by the equivalence tests) or under
// OpenMP. Reductions go through fixed-size blocks combined in block order,
// which makes results bit-identical regardless of thread count.

namespace stancedyn::exec {

enum class Mode { Serial, Parallel };

/// Process-wide execution mode. Defaults to Parallel when compiled with
/// OpenMP; kernels accept an explicit override where tests need both paths.
inline Mode& mode() {
    static Mode m = Mode::Parallel;
    return m;
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename Body>
void parallel_for(std::ptrdiff_t n, Body&& body, Mode m) {
    if (m == Mode::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        body(i);
    }
}

template <typename Body>
void parallel_for(std::ptrdiff_t n, Body&& body) {
    parallel_for(n, std::forward<Body>(body), mode());
}

/// Deterministic blocked reduction. Items [0, n) are split into fixed
/// blocks of `block_size`; each block accumulates into its own copy of
/// `Acc` (blocks may run concurrently), then blocks are combined serially
/// in index order. The summation order is therefore independent of the
/// thread count, so serial and parallel runs agree bit for bit.
///
/// make_acc()            -> Acc         fresh zero accumulator
/// accumulate(acc, i)                   add item i into acc
/// combine(total, acc)                  fold one block into the total
template <typename Acc, typename MakeAcc, typename Accumulate, typename Combine>
Acc blocked_reduce(std::ptrdiff_t n, std::ptrdiff_t block_size, MakeAcc&& make_acc,
                   Accumulate&& accumulate, Combine&& combine, Mode m) {
    if (block_size < 1) block_size = 1;
    const std::ptrdiff_t n_blocks = (n + block_size - 1) / block_size;
    std::vector<Acc> partials;
    partials.reserve(static_cast<std::size_t>(n_blocks));
    for (std::ptrdiff_t b = 0; b < n_blocks; ++b) partials.push_back(make_acc());

    parallel_for(
        n_blocks,
        [&](std::ptrdiff_t b) {
            const std::ptrdiff_t lo = b * block_size;
            const std::ptrdiff_t hi = std::min(n, lo + block_size);
            for (std::ptrdiff_t i = lo; i < hi; ++i) {
                accumulate(partials[static_cast<std::size_t>(b)], i);
            }
        },
        m);

    Acc total = make_acc();
    for (std::ptrdiff_t b = 0; b < n_blocks; ++b) {
        combine(total, partials[static_cast<std::size_t>(b)]);
    }
    return total;
}

template <typename Acc, typename MakeAcc, typename Accumulate, typename Combine>
Acc blocked_reduce(std::ptrdiff_t n, std::ptrdiff_t block_size, MakeAcc&& make_acc,
                   Accumulate&& accumulate, Combine&& combine) {
    return blocked_reduce<Acc>(n, block_size, std::forward<MakeAcc>(make_acc),
                               std::forward<Accumulate>(accumulate),
                               std::forward<Combine>(combine), mode());
}

} // namespace stancedyn::exec
