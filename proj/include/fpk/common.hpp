// Copyright 2026 The fpk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fpk {

inline constexpr std::size_t kMaxDim = 2;

/// A point or vector in a state space of dimension 1 or 2. Components past
/// the owning grid's dimension are kept at zero.
using Point = std::array<double, kMaxDim>;

/// Tolerance on |sum of masses - 1| for a member of the discrete simplex.
inline constexpr double kMassTolerance = 1e-12;

// Error hierarchy. Every failure raised by the library derives from Error so
// callers can separate solver failures from programming errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperationError : public Error {
 public:
  using Error::Error;
};

class ModelEvaluationError : public Error {
 public:
  using Error::Error;
};

class BoundaryExitError : public Error {
 public:
  using Error::Error;
};

class MisuseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kMaxDim; ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(const Point& p) {
  for (double v : p) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Worker thread cap: FPK_THREADS when set to a positive integer, otherwise
/// the OpenMP default.
inline int worker_threads() {
  if (const char* env = std::getenv("FPK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs fn(i) for i in [0, n). Iterations must be independent; results that
/// are reduced afterwards have to be combined in a fixed order by the caller.
/// If iterations throw, the exception from the lowest index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
  const int threads = worker_threads();
  if (threads > 1 && n > 1) {
    std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace fpk
