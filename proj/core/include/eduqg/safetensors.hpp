#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eduqg/graph.hpp"

namespace eduqg {

/// One tensor entry of a safetensors file.
struct TensorRecord {
  std::string dtype;  // F64, F32, F16 or BF16
  std::vector<std::int64_t> shape;
  std::size_t begin = 0;  // byte offsets into the data section
  std::size_t end = 0;
};

/// In-memory safetensors container: 8-byte little-endian header size, JSON
/// header, raw little-endian tensor data.
class SafeTensors {
 public:
  static SafeTensors read(const std::filesystem::path& path);

  const std::map<std::string, TensorRecord>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  bool contains(const std::string& name) const { return tensors_.contains(name); }

  /// Tensor converted to double, flattened row-major.
  std::vector<double> values(const std::string& name) const;

 private:
  std::map<std::string, TensorRecord> tensors_;
  std::map<std::string, std::string> metadata_;
  std::string data_;
};

struct NamedMatrix {
  std::string name;
  const Matrix* value = nullptr;
  bool as_vector = false;  // write shape [n] instead of [rows, cols]
};

/// Writes F64 tensors; bit-exact round trip through SafeTensors::values().
void write_safetensors(const std::filesystem::path& path, const std::vector<NamedMatrix>& tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace eduqg
