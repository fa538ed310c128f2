#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "entlm/tensor.hpp"

namespace entlm {

// Container shared by checkpoints and registry snapshots.
//
//   ENTLM-TENSORS <version>
//   kind <kind>
//   record <n>
//   <key>=<value>                       (n lines)
//   index <m>
//   <name> <rank> <d0> .. <byte offset>  (m lines)
//   data <byte count>
//   <little-endian float32 payload>
//
// Names and record values are percent-escaped for space, '%', '=' and line
// breaks.
struct TensorFileEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct TensorFileContents {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> record;
  std::vector<TensorFileEntry> tensors;

  // Value of a record key, or nullptr.
  const std::string* find_record(std::string_view key) const;
  const TensorFileEntry* find_tensor(std::string_view name) const;
};

inline constexpr int kTensorFileVersion = 1;

std::string serialize_tensor_file(const TensorFileContents& contents);
TensorFileContents parse_tensor_file(std::string_view bytes);

// Writes through a temporary file and renames it into place.
void write_tensor_file(const std::filesystem::path& path, const TensorFileContents& contents);
TensorFileContents read_tensor_file(const std::filesystem::path& path);

// Values narrowed to the stored 32-bit precision.
std::vector<float> to_stored(std::span<const double> values);

void write_file_atomically(const std::filesystem::path& path, std::string_view bytes);

}  // namespace entlm
