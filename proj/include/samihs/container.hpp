#pragma once

// Named-array container file.
//
// Little-endian layout:
//   magic      8 bytes  "SAMIHSNA"
//   version    u32      1
//   meta_len   u64      length of the UTF-8 JSON metadata that follows
//   metadata   meta_len bytes
//   count      u64      number of entries
//   entries    count x { name_len u32, name bytes, dtype u8, role u8,
//                        rows u64, cols u64, payload }
// dtype 0 = float64 (8 bytes/element), 1 = uint8. Payload is row-major.
// role  0 = data, 1 = trainable, 2 = frozen, 3 = buffer.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samihs/grid.hpp"

namespace samihs {

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f64 = 0, u8 = 1 };
enum class TensorRole : std::uint8_t { data = 0, trainable = 1, frozen = 2, buffer = 3 };

const char* role_name(TensorRole role);

struct ArrayEntry {
  std::string name;
  DType dtype = DType::f64;
  TensorRole role = TensorRole::data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> f64;
  std::vector<std::uint8_t> u8;
};

class NamedArrayFile {
 public:
  nlohmann::json metadata = nlohmann::json::object();

  void put(const std::string& name, const Matrix& m, TensorRole role = TensorRole::data);
  void put(const std::string& name, const Mask& m, TensorRole role = TensorRole::data);

  bool contains(const std::string& name) const { return find(name) != nullptr; }
  const ArrayEntry* find(const std::string& name) const;
  /// Throws ContainerError when missing or of the wrong dtype.
  Matrix matrix(const std::string& name) const;
  Mask mask(const std::string& name) const;

  const std::vector<ArrayEntry>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static NamedArrayFile deserialize(const std::vector<std::uint8_t>& bytes);

  /// Writes through a temporary file and renames, so a failed write never
  /// leaves a partial file at `path`.
  void save(const std::filesystem::path& path) const;
  static NamedArrayFile load(const std::filesystem::path& path);

 private:
  ArrayEntry& slot(const std::string& name);
  std::vector<ArrayEntry> entries_;
};

/// Atomic text write (temp file + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace samihs
