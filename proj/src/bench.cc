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

#include "psal/bench.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <string>

namespace psal {

namespace {

std::string three_significant(double value, const char* unit) {
  const int digits = value >= 100.0 ? 0 : value >= 10.0 ? 1 : 2;
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.*f", digits, value);
  std::string s(buf.data());
  // Drop trailing zeros of the fraction ("16.0" -> "16").
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s + " " + unit;
}

std::uint64_t require_positive(std::uint64_t v, const char* name) {
  if (v == 0) {
    throw ConfigError(std::string("memory model: ") + name + " must be > 0");
  }
  return v;
}

}  // namespace

std::string to_string(MemoryMethod method) {
  switch (method) {
    case MemoryMethod::kFull:
      return "full";
    case MemoryMethod::kPsalK:
      return "psal_k";
    case MemoryMethod::kPsalAggregation:
      return "psal_aggreg";
    case MemoryMethod::kLocal:
      return "local";
  }
  return "unknown";
}

std::uint64_t model_bytes(const MemoryModel& m) {
  const std::uint64_t n = require_positive(m.n, "n");
  const std::uint64_t b = require_positive(m.bytes_per_entry, "bytes_per_entry");
  switch (m.method) {
    case MemoryMethod::kFull:
      return b * n * n;
    case MemoryMethod::kPsalK:
      return b * require_positive(m.k, "k") * n;
    case MemoryMethod::kPsalAggregation:
      return b * require_positive(m.p, "p") * m.p * n;
    case MemoryMethod::kLocal:
      return b * require_positive(m.w, "w") * m.w * n;
  }
  return 0;
}

std::string complexity(const MemoryModel& m) {
  switch (m.method) {
    case MemoryMethod::kFull:
      return "O(n^2)";
    case MemoryMethod::kPsalK:
      return "O(" + std::to_string(m.k) + "n)";
    case MemoryMethod::kPsalAggregation:
      return "O(p^2n)";
    case MemoryMethod::kLocal:
      return "O(w^2n)";
  }
  return "";
}

std::string format_si(std::uint64_t bytes) {
  static constexpr std::array<const char*, 7> kUnits = {"B",  "kB", "MB", "GB",
                                                        "TB", "PB", "EB"};
  double v = static_cast<double>(bytes);
  std::size_t u = 0;
  while (v >= 999.5 && u + 1 < kUnits.size()) {
    v /= 1000.0;
    ++u;
  }
  if (u == 0) return std::to_string(bytes) + " B";
  return three_significant(v, kUnits[u]);
}

std::string format_iec(std::uint64_t bytes) {
  static constexpr std::array<const char*, 7> kUnits = {
      "B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"};
  double v = static_cast<double>(bytes);
  std::size_t u = 0;
  while (v >= 1023.5 && u + 1 < kUnits.size()) {
    v /= 1024.0;
    ++u;
  }
  if (u == 0) return std::to_string(bytes) + " B";
  return three_significant(v, kUnits[u]);
}

template <typename T>
OpCounter count_ops(const PatchScorer<T>& scorer, const SearchParams& params) {
  OpCounter counter;
  run(scorer, params, {}, &counter);
  return counter;
}

std::vector<BenchRow> memory_table(const std::vector<int>& sides, int k,
                                   int patch_size, int local_window) {
  std::vector<BenchRow> rows;
  const std::array<MemoryMethod, 4> methods = {
      MemoryMethod::kFull, MemoryMethod::kLocal, MemoryMethod::kPsalK,
      MemoryMethod::kPsalAggregation};
  for (const MemoryMethod method : methods) {
    for (const int side : sides) {
      if (side < 1) throw ConfigError("resolution must be >= 1");
      MemoryModel m;
      m.method = method;
      m.n = static_cast<std::uint64_t>(side) * static_cast<std::uint64_t>(side);
      m.k = static_cast<std::uint64_t>(k);
      m.p = static_cast<std::uint64_t>(patch_size);
      m.w = static_cast<std::uint64_t>(local_window);
      std::string name = to_string(method);
      if (method == MemoryMethod::kPsalK) name = "psal_" + std::to_string(k);
      rows.push_back({name, side, m.n, complexity(m), model_bytes(m)});
    }
  }
  return rows;
}

void write_memory_table_csv(const std::vector<BenchRow>& rows,
                            std::ostream& out) {
  out << "method,side,n,complexity,bytes,si,iec\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.side << ',' << r.n << ',' << r.complexity
        << ',' << r.bytes << ',' << format_si(r.bytes) << ','
        << format_iec(r.bytes) << '\n';
  }
}

void write_memory_table_text(const std::vector<BenchRow>& rows,
                             std::ostream& out) {
  out << std::left << std::setw(14) << "method" << std::setw(12) << "size"
      << std::setw(12) << "complexity" << std::right << std::setw(16)
      << "bytes" << std::setw(12) << "SI" << std::setw(12) << "IEC" << '\n';
  for (const auto& r : rows) {
    const std::string size = std::to_string(r.side) + "x" + std::to_string(r.side);
    out << std::left << std::setw(14) << r.method << std::setw(12) << size
        << std::setw(12) << r.complexity << std::right << std::setw(16)
        << r.bytes << std::setw(12) << format_si(r.bytes) << std::setw(12)
        << format_iec(r.bytes) << '\n';
  }
}

template OpCounter count_ops(const PatchScorer<float>&, const SearchParams&);
template OpCounter count_ops(const PatchScorer<double>&, const SearchParams&);

}  // namespace psal
