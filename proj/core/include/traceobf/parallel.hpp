// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace traceobf {

// Worker count used by parallel_for; defaults to the hardware concurrency.
std::size_t worker_count();
void set_worker_count(std::size_t n);

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs. The
// first exception thrown by any item is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace traceobf
