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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "psal/ann_field.h"

namespace psal {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'S', 'A', 'L', 'A', 'N', 'N', '1'};
constexpr const char* kTextTag = "psal-ann-field";

static_assert(std::endian::native == std::endian::little,
              "binary field dumps assume a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& in) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw IoError("ANN field dump truncated");
  }
  return v;
}

void add_triple(AnnField& field, std::uint64_t query, std::uint64_t key,
                float score, std::int64_t& last_query) {
  if (query >= static_cast<std::uint64_t>(field.query_count()) ||
      key >= static_cast<std::uint64_t>(field.key_count())) {
    throw IoError("ANN field dump: index out of range");
  }
  if (static_cast<std::int64_t>(query) < last_query) {
    throw IoError("ANN field dump: triples not in query order");
  }
  last_query = static_cast<std::int64_t>(query);
  const int q = static_cast<int>(query);
  if (field.size(q) == field.k() || field.contains(q, static_cast<int>(key))) {
    throw IoError("ANN field dump: duplicate or excess candidate for query " +
                  std::to_string(query));
  }
  field.offer(q, static_cast<int>(key), score);
}

}  // namespace

void write_field_binary(const AnnField& field, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(field.query_width()));
  put_u32(out, static_cast<std::uint32_t>(field.query_height()));
  put_u32(out, static_cast<std::uint32_t>(field.key_width()));
  put_u32(out, static_cast<std::uint32_t>(field.key_height()));
  put_u32(out, static_cast<std::uint32_t>(field.k()));
  std::uint64_t triples = 0;
  for (int q = 0; q < field.query_count(); ++q) triples += field.size(q);
  put_u64(out, triples);
  for (int q = 0; q < field.query_count(); ++q) {
    for (const Candidate& c : field.candidates(q)) {
      put_u32(out, static_cast<std::uint32_t>(q));
      put_u32(out, static_cast<std::uint32_t>(c.key));
      out.write(reinterpret_cast<const char*>(&c.score), sizeof c.score);
    }
  }
  if (!out) throw IoError("failed writing ANN field dump");
}

AnnField read_field_binary(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("not a binary ANN field dump (bad magic)");
  }
  const auto qw = get<std::uint32_t>(in);
  const auto qh = get<std::uint32_t>(in);
  const auto kw = get<std::uint32_t>(in);
  const auto kh = get<std::uint32_t>(in);
  const auto k = get<std::uint32_t>(in);
  AnnField field(static_cast<int>(qw), static_cast<int>(qh),
                 static_cast<int>(kw), static_cast<int>(kh),
                 static_cast<int>(k));
  const auto triples = get<std::uint64_t>(in);
  std::int64_t last_query = -1;
  for (std::uint64_t t = 0; t < triples; ++t) {
    const auto query = get<std::uint32_t>(in);
    const auto key = get<std::uint32_t>(in);
    const auto score = get<float>(in);
    add_triple(field, query, key, score, last_query);
  }
  return field;
}

void write_field_text(const AnnField& field, std::ostream& out) {
  out << "# " << kTextTag << ' ' << field.query_width() << ' '
      << field.query_height() << ' ' << field.key_width() << ' '
      << field.key_height() << ' ' << field.k() << '\n';
  const auto old_precision = out.precision(9);
  for (int q = 0; q < field.query_count(); ++q) {
    for (const Candidate& c : field.candidates(q)) {
      out << q << ' ' << c.key << ' ' << c.score << '\n';
    }
  }
  out.precision(old_precision);
  if (!out) throw IoError("failed writing ANN field dump");
}

AnnField read_field_text(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty ANN field dump");
  std::istringstream header(line);
  std::string hash, tag;
  int qw = 0, qh = 0, kw = 0, kh = 0, k = 0;
  if (!(header >> hash >> tag >> qw >> qh >> kw >> kh >> k) || hash != "#" ||
      tag != kTextTag) {
    throw IoError("not a text ANN field dump (bad header)");
  }
  AnnField field(qw, qh, kw, kh, k);
  std::int64_t last_query = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::uint64_t query = 0, key = 0;
    float score = 0.0f;
    if (!(row >> query >> key >> score)) {
      throw IoError("malformed ANN field line: " + line);
    }
    add_triple(field, query, key, score, last_query);
  }
  return field;
}

}  // namespace psal
