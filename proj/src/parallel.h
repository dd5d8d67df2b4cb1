// Copyright 2026 The PSAL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSAL_SRC_PARALLEL_H_
#define PSAL_SRC_PARALLEL_H_

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace psal::internal {

// Splits [0, count) into `workers` contiguous chunks and runs
// fn(begin, end, worker) on each. Runs inline when workers <= 1. The first
// exception thrown by any worker is rethrown after all have joined.
template <typename Fn>
void parallel_chunks(int count, int workers, Fn&& fn) {
  workers = std::clamp(workers, 1, std::max(count, 1));
  if (workers == 1) {
    fn(0, count, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      const int begin = static_cast<int>(static_cast<long long>(count) * w / workers);
      const int end =
          static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
      pool.emplace_back([&, begin, end, w] {
        try {
          fn(begin, end, w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace psal::internal

#endif  // PSAL_SRC_PARALLEL_H_
