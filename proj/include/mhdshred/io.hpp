#pragma once

#include "mhdshred/common.hpp"
#include "mhdshred/shred.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

/// Artifact formats: checksummed binary matrices, model checkpoints,
/// key-value manifests and CSV.
namespace mhdshred::io {

namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);
std::uint32_t crc32(std::string_view bytes);

/// Write to a sibling temporary file, flush, then rename over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

/// Binary matrix file:
///   "SHRD1" | endianness 'L' | dtype 'd' | reserved 0 | label[16] |
///   u64 rows | u64 cols | f64 param | f64 save_dt | u32 header crc |
///   u32 payload crc | rows*cols f64 row-major
/// All integers and floats little-endian.
struct MatrixHeader {
  std::string label;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  double param_value = 0.0;
  double save_dt = 0.0;
};

inline constexpr std::size_t kMatrixHeaderBytes = 5 + 3 + 16 + 8 + 8 + 8 + 8 + 4 + 4;

std::string encode_matrix(const Matrix& m, MatrixHeader header);
std::pair<MatrixHeader, Matrix> decode_matrix(std::string_view bytes, const std::string& origin = "");

/// Returns the SHA-256 of the written file.
std::string write_matrix(const fs::path& path, const Matrix& m, const MatrixHeader& header);
/// Throws Error(Integrity) on a bad magic, checksum or length.
std::pair<MatrixHeader, Matrix> read_matrix(const fs::path& path);

/// Sectioned key-value text; keys keep insertion order.
class Manifest {
 public:
  using Section = std::vector<std::pair<std::string, std::string>>;

  void set(const std::string& section, const std::string& key, const std::string& value);
  template <class T>
  void set_value(const std::string& section, const std::string& key, const T& v);
  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  long get_int(const std::string& section, const std::string& key) const;
  const Section& section(const std::string& name) const;
  bool has_section(const std::string& name) const;
  std::vector<std::string> section_names() const;

  /// Record a file (path relative to `base`) with its hash in [files].
  void add_file(const fs::path& base, const fs::path& file, const std::string& sha256);
  /// Recompute every [files] hash; throws Error(Integrity) on mismatch or a
  /// missing file.
  void verify_files(const fs::path& base) const;

  std::string serialize() const;
  static Manifest parse(const std::string& text, const std::string& origin = "");
  void write(const fs::path& path) const;
  static Manifest read(const fs::path& path);

 private:
  std::vector<std::pair<std::string, Section>> sections_;
  Section* find(const std::string& name);
  const Section* find(const std::string& name) const;
};

std::string format_double(double v);

template <class T>
void Manifest::set_value(const std::string& section, const std::string& key, const T& v) {
  if constexpr (std::is_floating_point_v<T>) set(section, key, format_double(v));
  else set(section, key, std::to_string(v));
}

/// Versioned checkpoint: "SHRDM" | u8 version | u8[2] reserved |
/// u64 metadata length | JSON metadata | u64 parameter count | f64 params |
/// u32 crc32 of all preceding bytes.
inline constexpr std::uint8_t kModelVersion = 1;

std::string encode_model(const shred::ShredModel& model);
shred::ShredModel decode_model(std::string_view bytes, const std::string& origin = "");
std::string write_model(const fs::path& path, const shred::ShredModel& model);
shred::ShredModel read_model(const fs::path& path);

/// Plain-text cell values: one row per cell (velocity: all x rows, then all y
/// rows), one comma-separated column per saved instant. Blank lines and lines
/// starting with '#' are ignored.
Matrix read_csv_matrix(const fs::path& path);
std::string csv_matrix(const Matrix& m);

/// Header line plus one row per index; columns share a length.
std::string csv_columns(const std::vector<std::string>& names, const std::vector<Vector>& columns);

}  // namespace mhdshred::io
