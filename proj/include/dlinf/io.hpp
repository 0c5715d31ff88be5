#pragma once

// File formats. All binary payloads are little-endian IEEE-754 doubles.
//
// Dataset file ("DLDS"):  magic[4] u32 version u64 n u64 count, then count
//                         feature vectors of n doubles each (row-major).
// Matrix file  ("DLMX"):  magic[4] u32 version u64 rows u64 cols, then the
//                         matrix row-major.
// Model file   ("DLEN"):  magic[4] u32 version u32 architecture u64 n u64 N
//                         u64 K, then W (N x n), S_2..S_K (N x N), b_1..b_K
//                         (N), lambda (N); matrices row-major.
//
// Text companions: labels CSV "index,label", pairs CSV "i,j,similar", codes
// file with one hex-packed code per line.

#include "dlinf/common.hpp"
#include "dlinf/encoder.hpp"
#include "dlinf/hashing.hpp"
#include "dlinf/training.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace dlinf::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::array<char, 4> kDatasetMagic{'D', 'L', 'D', 'S'};
inline constexpr std::array<char, 4> kMatrixMagic{'D', 'L', 'M', 'X'};
inline constexpr std::array<char, 4> kModelMagic{'D', 'L', 'E', 'N'};

/// Writes to a sibling temp file and renames it into place.
inline void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    buf_.append(raw.data(), raw.size());
  }
  void magic(const std::array<char, 4>& m) { buf_.append(m.data(), m.size()); }
  void matrix_row_major(const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(m(i, j));
  }
  void vector(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v[i]);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin) : buf_(std::move(bytes)), origin_(std::move(origin)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }
  void expect_magic(const std::array<char, 4>& m) {
    need(4);
    if (std::memcmp(buf_.data() + pos_, m.data(), 4) != 0) fail("bad magic (expected " + std::string(m.data(), 4) + ")");
    pos_ += 4;
  }
  void expect_version() {
    const auto v = get<std::uint32_t>();
    if (v != kFormatVersion) fail("unsupported format version " + std::to_string(v));
  }
  Mat matrix_row_major(std::uint64_t rows, std::uint64_t cols) {
    need_doubles(rows, cols);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
    return m;
  }
  Vec vector(std::uint64_t size) {
    need_doubles(size, 1);
    Vec v(static_cast<Eigen::Index>(size));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get<double>();
    return v;
  }
  void expect_end() {
    if (pos_ != buf_.size()) fail("trailing bytes after payload");
  }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(origin_ + ": " + what); }

 private:
  void need(std::size_t count) {
    if (buf_.size() - pos_ < count) fail("truncated file");
  }
  void need_doubles(std::uint64_t a, std::uint64_t b) {
    const std::uint64_t left = (buf_.size() - pos_) / 8;
    if (a != 0 && b > left / a) fail("truncated payload");
  }

  std::string buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

// ---- datasets: stored in memory as n x count (one column per sample) ----

inline std::string encode_dataset(const Mat& features) {
  ByteWriter w;
  w.magic(kDatasetMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(features.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(features.cols()));
  // Row-major count x n is the transpose of the in-memory layout.
  w.matrix_row_major(features.transpose());
  return w.bytes();
}

inline Mat decode_dataset(std::string bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic(kDatasetMagic);
  r.expect_version();
  const auto n = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (n == 0) r.fail("feature dimension is zero");
  Mat rows = r.matrix_row_major(count, n);
  r.expect_end();
  return rows.transpose();
}

inline void write_dataset(const fs::path& path, const Mat& features) { atomic_write(path, encode_dataset(features)); }
inline Mat read_dataset(const fs::path& path) { return decode_dataset(read_file(path), path.string()); }

inline std::string encode_matrix(const Mat& m) {
  ByteWriter w;
  w.magic(kMatrixMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  w.matrix_row_major(m);
  return w.bytes();
}

inline Mat decode_matrix(std::string bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic(kMatrixMagic);
  r.expect_version();
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  Mat m = r.matrix_row_major(rows, cols);
  r.expect_end();
  return m;
}

inline void write_matrix(const fs::path& path, const Mat& m) { atomic_write(path, encode_matrix(m)); }
inline Mat read_matrix(const fs::path& path) { return decode_matrix(read_file(path), path.string()); }

inline std::string encode_model(const EncoderParams& p) {
  p.validate();
  ByteWriter w;
  w.magic(kModelMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.arch));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.input_dim()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.code_dim()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.stages()));
  w.matrix_row_major(p.W);
  for (const auto& s : p.S) w.matrix_row_major(s);
  for (const auto& v : p.b) w.vector(v);
  w.vector(p.lambda);
  return w.bytes();
}

inline EncoderParams decode_model(std::string bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic(kModelMagic);
  r.expect_version();
  const auto arch = r.get<std::uint32_t>();
  if (arch > static_cast<std::uint32_t>(Architecture::kNnh)) r.fail("unknown architecture id " + std::to_string(arch));
  const auto n = r.get<std::uint64_t>();
  const auto N = r.get<std::uint64_t>();
  const auto K = r.get<std::uint64_t>();
  if (n == 0 || N == 0 || K == 0) r.fail("zero dimension in model header");
  if (K > 1024) r.fail("implausible stage count");
  EncoderParams p;
  p.arch = static_cast<Architecture>(arch);
  p.W = r.matrix_row_major(N, n);
  for (std::uint64_t k = 1; k < K; ++k) p.S.push_back(r.matrix_row_major(N, N));
  for (std::uint64_t k = 0; k < K; ++k) p.b.push_back(r.vector(N));
  p.lambda = r.vector(N);
  r.expect_end();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  return p;
}

inline void write_model(const fs::path& path, const EncoderParams& p) { atomic_write(path, encode_model(p)); }
inline EncoderParams read_model(const fs::path& path) { return decode_model(read_file(path), path.string()); }

// ---- text companions ----

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return fields;
}

inline bool is_header_or_blank(const std::string& line, std::size_t line_no) {
  const auto b = line.find_first_not_of(" \t\r");
  if (b == std::string::npos || line[b] == '#') return true;
  return line_no == 1 && !std::isdigit(static_cast<unsigned char>(line[b])) && line[b] != '-';
}

inline long long parse_int(const std::string& s, const std::string& origin, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(origin + ":" + std::to_string(line_no) + ": not an integer: '" + s + "'");
  }
}

inline std::string encode_labels(const std::vector<int>& labels) {
  std::string out = "index,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  return out;
}

/// Labels CSV; every index in [0, count) must appear exactly once.
inline std::vector<int> read_labels(const fs::path& path, std::size_t count) {
  std::istringstream in(read_file(path));
  std::vector<int> labels(count, 0);
  std::vector<char> seen(count, 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_header_or_blank(line, line_no)) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected index,label");
    const long long idx = parse_int(f[0], path.string(), line_no);
    if (idx < 0 || static_cast<std::size_t>(idx) >= count)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": index out of range");
    labels[static_cast<std::size_t>(idx)] = static_cast<int>(parse_int(f[1], path.string(), line_no));
    seen[static_cast<std::size_t>(idx)] = 1;
  }
  for (std::size_t i = 0; i < count; ++i)
    if (!seen[i]) throw IoError(path.string() + ": missing label for index " + std::to_string(i));
  return labels;
}

inline void write_labels(const fs::path& path, const std::vector<int>& labels) { atomic_write(path, encode_labels(labels)); }

inline std::vector<IndexPair> read_pairs(const fs::path& path, std::size_t count) {
  std::istringstream in(read_file(path));
  std::vector<IndexPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_header_or_blank(line, line_no)) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected i,j,similar");
    const long long i = parse_int(f[0], path.string(), line_no);
    const long long j = parse_int(f[1], path.string(), line_no);
    const long long s = parse_int(f[2], path.string(), line_no);
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= count || static_cast<std::size_t>(j) >= count)
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": index out of range");
    pairs.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), s != 0});
  }
  return pairs;
}

inline std::string encode_codes(const std::vector<HashCode>& codes) {
  std::string out;
  for (const auto& c : codes) {
    out += c.to_hex();
    out += '\n';
  }
  return out;
}

inline void write_codes(const fs::path& path, const std::vector<HashCode>& codes) { atomic_write(path, encode_codes(codes)); }

inline std::vector<HashCode> read_codes(const fs::path& path, std::size_t bits) {
  std::istringstream in(read_file(path));
  std::vector<HashCode> codes;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    codes.push_back(HashCode::from_hex(line, bits));
  }
  return codes;
}

/// Plain numeric CSV (one sample per row) to an n x count matrix.
inline Mat read_feature_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    std::vector<double> row;
    for (const auto& f : split_csv_line(line)) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        if (rows.empty() && row.empty()) break;  // header line
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + f + "'");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": no numeric rows");
  Mat m(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  return m;
}

}  // namespace dlinf::io
