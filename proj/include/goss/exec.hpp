#pragma once

namespace goss {

/// Execution policy for the data-parallel kernels. Both policies produce
/// bitwise-identical results; `serial` exists for testing and benchmarking.
enum class Exec { kSerial, kParallel };

inline bool is_parallel(Exec exec) { return exec == Exec::kParallel; }

/// Sets the OpenMP team size. Values < 1 select all available cores.
void set_thread_count(int threads);
int thread_count();

}  // namespace goss
