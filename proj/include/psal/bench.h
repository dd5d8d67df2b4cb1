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

#ifndef PSAL_BENCH_H_
#define PSAL_BENCH_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "psal/ann_field.h"
#include "psal/similarity.h"

namespace psal {

enum class MemoryMethod { kFull, kPsalK, kPsalAggregation, kLocal };

std::string to_string(MemoryMethod method);

// Closed-form attention-matrix footprint, 4 bytes per stored entry:
//   full          n^2
//   psal_k        k n
//   psal_aggreg   p^2 n
//   local         w^2 n
struct MemoryModel {
  MemoryMethod method = MemoryMethod::kFull;
  std::uint64_t n = 0;
  std::uint64_t k = 3;
  std::uint64_t p = 7;
  std::uint64_t w = 50;
  std::uint64_t bytes_per_entry = 4;
};

// Throws ConfigError for a zero parameter used by the method.
std::uint64_t model_bytes(const MemoryModel& model);
// "O(n^2)", "O(3n)", "O(p^2n)", "O(w^2n)".
std::string complexity(const MemoryModel& model);

// 786432 -> "786 kB", 3145728 -> "3.15 MB" (decimal, three significant
// digits).
std::string format_si(std::uint64_t bytes);
// 17179869184 -> "16 GiB".
std::string format_iec(std::uint64_t bytes);

// Runs annfield::run on the given views with counting enabled.
template <typename T>
OpCounter count_ops(const PatchScorer<T>& scorer, const SearchParams& params);

struct BenchRow {
  std::string method;
  int side = 0;
  std::uint64_t n = 0;
  std::string complexity;
  std::uint64_t bytes = 0;
};

// One row per (method, resolution) for square images of the given sides.
std::vector<BenchRow> memory_table(const std::vector<int>& sides, int k,
                                   int patch_size, int local_window);

// CSV: method,side,n,complexity,bytes,si,iec
void write_memory_table_csv(const std::vector<BenchRow>& rows,
                            std::ostream& out);
void write_memory_table_text(const std::vector<BenchRow>& rows,
                             std::ostream& out);

}  // namespace psal

#endif  // PSAL_BENCH_H_
