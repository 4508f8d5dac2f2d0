// Copyright 2026 The anacil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ANACIL_EMBEDDING_STORE_HPP_
#define ANACIL_EMBEDDING_STORE_HPP_

// Binary embedding datasets ("VILAEMB1") and prototype banks ("VILATXT1").
//
// Dataset layout, all little-endian:
//   magic[8] | record_count u32 | adapter_dim u32 | clip_dim u32 | class_count u32
//   then per record: label u32 | task_id u32 | adapter f32[D] | clip f32[D_C]
//
// Bank layout:
//   magic[8] | class_count u32 | template_count u32 | dim u32 | f32[C*P*D_C]
// class-major, with class names in a sidecar text manifest (one per line).

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anacil/error.hpp"

namespace anacil {

inline constexpr std::string_view kDatasetMagic = "VILAEMB1";
inline constexpr std::string_view kBankMagic = "VILATXT1";
inline constexpr std::size_t kDatasetHeaderBytes = 24;

struct FeatureRecord {
  std::vector<float> adapter_feature;
  std::vector<float> clip_feature;
  std::uint32_t label = 0;
  std::uint32_t task_id = 0;

  bool operator==(const FeatureRecord&) const = default;
};

struct DatasetHeader {
  std::uint32_t record_count = 0;
  std::uint32_t adapter_dim = 0;
  std::uint32_t clip_dim = 0;
  std::uint32_t class_count = 0;  // 0 = unknown

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<FeatureRecord> records;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes{static_cast<char>(v & 0xFFU),
                                  static_cast<char>((v >> 8) & 0xFFU),
                                  static_cast<char>((v >> 16) & 0xFFU),
                                  static_cast<char>((v >> 24) & 0xFFU)};
  out.write(bytes.data(), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFULL));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool get_u64(std::istream& in, std::uint64_t& v) {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  if (!get_u32(in, lo) || !get_u32(in, hi)) return false;
  v = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return true;
}

inline bool get_f32(std::istream& in, float& v) {
  std::uint32_t bits = 0;
  if (!get_u32(in, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

inline bool get_f64(std::istream& in, double& v) {
  std::uint64_t bits = 0;
  if (!get_u64(in, bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::array<char, 8> got{};
  if (!in.read(got.data(), 8)) throw Error(ErrorCode::kTruncated, "stream ended inside magic");
  if (std::string_view(got.data(), 8) != magic) {
    throw Error(ErrorCode::kBadMagic,
                "expected '" + std::string(magic) + "', got '" + std::string(got.data(), 8) + "'");
  }
}

inline bool all_finite(std::span<const float> v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

inline void validate_record(const FeatureRecord& r, const DatasetHeader& h, std::size_t index) {
  if (r.adapter_feature.size() != h.adapter_dim || r.clip_feature.size() != h.clip_dim) {
    throw Error(ErrorCode::kDimensionMismatch,
                "record " + std::to_string(index) + " has dims (" +
                    std::to_string(r.adapter_feature.size()) + ", " +
                    std::to_string(r.clip_feature.size()) + "), header says (" +
                    std::to_string(h.adapter_dim) + ", " + std::to_string(h.clip_dim) + ")");
  }
  if (!detail::all_finite(r.adapter_feature) || !detail::all_finite(r.clip_feature)) {
    throw Error(ErrorCode::kNonFinite, "record " + std::to_string(index));
  }
  if (h.class_count > 0 && r.label >= h.class_count) {
    throw Error(ErrorCode::kLabelOutOfRange, "record " + std::to_string(index) + " label " +
                                                 std::to_string(r.label) + " >= " +
                                                 std::to_string(h.class_count));
  }
}

inline std::size_t dataset_record_bytes(const DatasetHeader& h) {
  return 8 + 4 * (static_cast<std::size_t>(h.adapter_dim) + h.clip_dim);
}

/// Validates every record before emitting anything, so a rejected dataset
/// leaves the sink untouched. Returns the number of bytes written.
inline std::size_t write_dataset(std::span<const FeatureRecord> records, const DatasetHeader& header,
                                 std::ostream& sink) {
  if (header.adapter_dim == 0 && header.clip_dim == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "both feature branches have dimension 0");
  }
  if (header.record_count != records.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "header record_count " + std::to_string(header.record_count) + " but " +
                    std::to_string(records.size()) + " records given");
  }
  for (std::size_t i = 0; i < records.size(); ++i) validate_record(records[i], header, i);

  sink.write(kDatasetMagic.data(), 8);
  detail::put_u32(sink, header.record_count);
  detail::put_u32(sink, header.adapter_dim);
  detail::put_u32(sink, header.clip_dim);
  detail::put_u32(sink, header.class_count);
  for (const auto& r : records) {
    detail::put_u32(sink, r.label);
    detail::put_u32(sink, r.task_id);
    for (float v : r.adapter_feature) detail::put_f32(sink, v);
    for (float v : r.clip_feature) detail::put_f32(sink, v);
  }
  if (!sink) throw Error(ErrorCode::kIo, "write failed");
  return kDatasetHeaderBytes + records.size() * dataset_record_bytes(header);
}

inline DatasetHeader read_dataset_header(std::istream& source) {
  detail::expect_magic(source, kDatasetMagic);
  DatasetHeader h;
  if (!detail::get_u32(source, h.record_count) || !detail::get_u32(source, h.adapter_dim) ||
      !detail::get_u32(source, h.clip_dim) || !detail::get_u32(source, h.class_count)) {
    throw Error(ErrorCode::kTruncated, "stream ended inside dataset header");
  }
  if (h.adapter_dim == 0 && h.clip_dim == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "both feature branches have dimension 0");
  }
  return h;
}

/// Iterator-mode reader: holds one record at a time.
class DatasetReader {
 public:
  explicit DatasetReader(std::istream& source) : source_(&source), header_(read_dataset_header(source)) {}

  const DatasetHeader& header() const noexcept { return header_; }
  std::size_t position() const noexcept { return next_index_; }

  /// Reads the next record into `out`, reusing its buffers. Returns false once
  /// all `record_count` records are consumed.
  bool next(FeatureRecord& out) {
    if (next_index_ >= header_.record_count) return false;
    out.adapter_feature.resize(header_.adapter_dim);
    out.clip_feature.resize(header_.clip_dim);
    bool ok = detail::get_u32(*source_, out.label) && detail::get_u32(*source_, out.task_id);
    for (std::size_t i = 0; ok && i < header_.adapter_dim; ++i) ok = detail::get_f32(*source_, out.adapter_feature[i]);
    for (std::size_t i = 0; ok && i < header_.clip_dim; ++i) ok = detail::get_f32(*source_, out.clip_feature[i]);
    if (!ok) {
      throw Error(ErrorCode::kTruncated, "header claims " + std::to_string(header_.record_count) +
                                             " records, body ended in record " +
                                             std::to_string(next_index_));
    }
    validate_record(out, header_, next_index_);
    ++next_index_;
    return true;
  }

 private:
  std::istream* source_;
  DatasetHeader header_;
  std::size_t next_index_ = 0;
};

inline Dataset read_dataset(std::istream& source) {
  DatasetReader reader(source);
  Dataset ds;
  ds.header = reader.header();
  ds.records.reserve(ds.header.record_count);
  FeatureRecord r;
  while (reader.next(r)) ds.records.push_back(r);
  return ds;
}

inline std::size_t save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  auto out = detail::open_out(path);
  return write_dataset(ds.records, ds.header, out);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_dataset(in);
}

/// Header derived from the records themselves (dims from the first record).
inline DatasetHeader header_for(std::span<const FeatureRecord> records, std::uint32_t class_count = 0) {
  DatasetHeader h;
  h.record_count = static_cast<std::uint32_t>(records.size());
  h.class_count = class_count;
  if (!records.empty()) {
    h.adapter_dim = static_cast<std::uint32_t>(records.front().adapter_feature.size());
    h.clip_dim = static_cast<std::uint32_t>(records.front().clip_feature.size());
  }
  return h;
}

// ---------------------------------------------------------------------------
// Prototype banks

struct PrototypeBankFile {
  std::uint32_t class_count = 0;
  std::uint32_t template_count = 0;
  std::uint32_t dim = 0;
  std::vector<float> payload;  // class-major C x P x D_C
  std::vector<std::string> class_names;

  std::span<const float> prototype(std::size_t cls, std::size_t tmpl) const {
    const std::size_t offset = (cls * template_count + tmpl) * dim;
    return std::span<const float>(payload).subspan(offset, dim);
  }

  bool operator==(const PrototypeBankFile&) const = default;
};

inline void validate_bank(const PrototypeBankFile& bank) {
  const std::size_t expected =
      static_cast<std::size_t>(bank.class_count) * bank.template_count * bank.dim;
  if (bank.payload.size() != expected) {
    throw Error(ErrorCode::kTruncated, "bank payload has " + std::to_string(bank.payload.size()) +
                                           " values, expected C*P*D_C = " + std::to_string(expected));
  }
  if (!detail::all_finite(bank.payload)) throw Error(ErrorCode::kNonFinite, "bank payload");
  for (std::size_t c = 0; c < bank.class_count; ++c) {
    for (std::size_t p = 0; p < bank.template_count; ++p) {
      double sq = 0.0;
      for (float v : bank.prototype(c, p)) sq += static_cast<double>(v) * v;
      if (sq == 0.0) {
        throw Error(ErrorCode::kZeroNorm,
                    "class " + std::to_string(c) + " template " + std::to_string(p));
      }
    }
  }
  if (!bank.class_names.empty() && bank.class_names.size() != bank.class_count) {
    throw Error(ErrorCode::kDimensionMismatch, "manifest lists " +
                                                   std::to_string(bank.class_names.size()) +
                                                   " names for " + std::to_string(bank.class_count) +
                                                   " classes");
  }
}

inline std::size_t write_prototype_bank(const PrototypeBankFile& bank, std::ostream& sink) {
  validate_bank(bank);
  sink.write(kBankMagic.data(), 8);
  detail::put_u32(sink, bank.class_count);
  detail::put_u32(sink, bank.template_count);
  detail::put_u32(sink, bank.dim);
  for (float v : bank.payload) detail::put_f32(sink, v);
  if (!sink) throw Error(ErrorCode::kIo, "write failed");
  return 20 + 4 * bank.payload.size();
}

inline std::vector<std::string> read_class_names(std::istream& manifest) {
  std::vector<std::string> names;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  return names;
}

inline void write_class_names(std::span<const std::string> names, std::ostream& manifest) {
  for (const auto& n : names) manifest << n << '\n';
}

/// Reads a bank; `manifest` (optional) supplies the class names.
inline PrototypeBankFile read_prototype_bank(std::istream& source, std::istream* manifest = nullptr) {
  detail::expect_magic(source, kBankMagic);
  PrototypeBankFile bank;
  if (!detail::get_u32(source, bank.class_count) || !detail::get_u32(source, bank.template_count) ||
      !detail::get_u32(source, bank.dim)) {
    throw Error(ErrorCode::kTruncated, "stream ended inside bank header");
  }
  const std::size_t expected =
      static_cast<std::size_t>(bank.class_count) * bank.template_count * bank.dim;
  bank.payload.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    if (!detail::get_f32(source, bank.payload[i])) {
      throw Error(ErrorCode::kTruncated, "bank payload ended after " + std::to_string(i) +
                                             " of " + std::to_string(expected) + " values");
    }
  }
  if (source.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kTruncated, "bank payload longer than C*P*D_C");
  }
  if (manifest != nullptr) bank.class_names = read_class_names(*manifest);
  validate_bank(bank);
  return bank;
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& bank_path) {
  return std::filesystem::path(bank_path.string() + ".names");
}

inline void save_prototype_bank(const std::filesystem::path& path, const PrototypeBankFile& bank) {
  auto out = detail::open_out(path);
  write_prototype_bank(bank, out);
  if (!bank.class_names.empty()) {
    std::ofstream names(manifest_path_for(path));
    if (!names) throw Error(ErrorCode::kIo, "cannot write class-name manifest");
    write_class_names(bank.class_names, names);
  }
}

/// Loads `path`, picking up `<path>.names` as the manifest when present.
inline PrototypeBankFile load_prototype_bank(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  const auto names_path = manifest_path_for(path);
  if (std::filesystem::exists(names_path)) {
    std::ifstream names(names_path);
    return read_prototype_bank(in, &names);
  }
  return read_prototype_bank(in);
}

}  // namespace anacil

#endif  // ANACIL_EMBEDDING_STORE_HPP_
