#pragma once

#include <atomic>
#include <cstdint>

namespace fvb {

// Instrumentation used by tests and the table workflow to prove that reusing a
// precomputed table triggers no additional model fits.
std::atomic<std::uint64_t>& gmm_fit_count();
std::atomic<std::uint64_t>& bmlr_fit_count();

}  // namespace fvb
