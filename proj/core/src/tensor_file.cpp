#include "entlm/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

constexpr std::string_view kMagic = "ENTLM-TENSORS";

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '%':
        out += "%25";
        break;
      case ' ':
        out += "%20";
        break;
      case '=':
        out += "%3D";
        break;
      case '\n':
        out += "%0A";
        break;
      case '\r':
        out += "%0D";
        break;
      case '\t':
        out += "%09";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const std::string hex(s.substr(i + 1, 2));
      char* end = nullptr;
      const long v = std::strtol(hex.c_str(), &end, 16);
      if (end != hex.c_str() + 2) throw CheckpointError("bad escape sequence in tensor file header");
      out += static_cast<char>(v);
      i += 2;
    } else if (s[i] == '%') {
      throw CheckpointError("bad escape sequence in tensor file header");
    } else {
      out += s[i];
    }
  }
  return out;
}

// Header reader over the raw bytes; distinguishes running out of input from
// malformed content.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line(const char* what) {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw TruncatedError(std::string("tensor file ends inside the ") + what);
    std::string_view out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::size_t parse_count(std::string_view line, std::string_view keyword) {
  if (line.rfind(keyword, 0) != 0 || line.size() <= keyword.size() + 1 || line[keyword.size()] != ' ') {
    throw CheckpointError("expected '" + std::string(keyword) + " <n>' in tensor file header, got '" +
                          std::string(line) + "'");
  }
  try {
    std::size_t used = 0;
    const std::string digits(line.substr(keyword.size() + 1));
    const auto v = std::stoull(digits, &used);
    if (used != digits.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw CheckpointError("bad count in tensor file header line '" + std::string(line) + "'");
  }
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

const std::string* TensorFileContents::find_record(std::string_view key) const {
  for (const auto& [k, v] : record) {
    if (k == key) return &v;
  }
  return nullptr;
}

const TensorFileEntry* TensorFileContents::find_tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<float> to_stored(std::span<const double> values) {
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
  return out;
}

std::string serialize_tensor_file(const TensorFileContents& contents) {
  std::ostringstream header;
  header << kMagic << ' ' << kTensorFileVersion << '\n';
  header << "kind " << escape(contents.kind) << '\n';
  header << "record " << contents.record.size() << '\n';
  for (const auto& [k, v] : contents.record) header << escape(k) << '=' << escape(v) << '\n';
  header << "index " << contents.tensors.size() << '\n';
  std::size_t offset = 0;
  for (const auto& t : contents.tensors) {
    if (shape_numel(t.shape) != t.values.size() || t.shape.empty()) {
      throw ContractError("tensor '" + t.name + "' has " + std::to_string(t.values.size()) + " values for shape " +
                          shape_string(t.shape));
    }
    header << escape(t.name) << ' ' << t.shape.size();
    for (std::size_t d : t.shape) header << ' ' << d;
    header << ' ' << offset << '\n';
    offset += t.values.size() * 4;
  }
  header << "data " << offset << '\n';
  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const auto& t : contents.tensors) {
    for (float f : t.values) put_u32_le(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

TensorFileContents parse_tensor_file(std::string_view bytes) {
  if (bytes.empty()) throw TruncatedError("tensor file is empty");
  HeaderReader reader(bytes);
  {
    const std::string_view first = reader.line("format line");
    if (first.rfind(kMagic, 0) != 0) throw CheckpointError("not a tensor file (bad magic)");
    const std::string version(first.substr(kMagic.size()));
    int parsed = -1;
    try {
      parsed = std::stoi(version);
    } catch (const std::exception&) {
      throw VersionError("unreadable tensor file version '" + version + "'");
    }
    if (parsed != kTensorFileVersion) {
      throw VersionError("tensor file version " + std::to_string(parsed) + " is not supported (expected " +
                         std::to_string(kTensorFileVersion) + ")");
    }
  }
  TensorFileContents contents;
  {
    const std::string_view kind = reader.line("kind line");
    if (kind.rfind("kind ", 0) != 0) throw CheckpointError("missing kind line in tensor file header");
    contents.kind = unescape(kind.substr(5));
  }
  const std::size_t n_record = parse_count(reader.line("record header"), "record");
  for (std::size_t i = 0; i < n_record; ++i) {
    const std::string_view kv = reader.line("record");
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw CheckpointError("record line without '='");
    contents.record.emplace_back(unescape(kv.substr(0, eq)), unescape(kv.substr(eq + 1)));
  }
  const std::size_t n_tensors = parse_count(reader.line("index header"), "index");
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    std::istringstream entry{std::string(reader.line("tensor index"))};
    std::string name;
    std::size_t rank = 0;
    if (!(entry >> name >> rank) || rank == 0) throw CheckpointError("malformed tensor index entry");
    TensorFileEntry t;
    t.name = unescape(name);
    t.shape.resize(rank);
    for (std::size_t& d : t.shape) {
      if (!(entry >> d) || d == 0) throw CheckpointError("malformed shape for tensor '" + t.name + "'");
    }
    std::size_t offset = 0;
    if (!(entry >> offset)) throw CheckpointError("missing offset for tensor '" + t.name + "'");
    offsets.push_back(offset);
    contents.tensors.push_back(std::move(t));
  }
  const std::size_t data_bytes = parse_count(reader.line("data header"), "data");
  const std::size_t data_start = reader.position();
  if (bytes.size() < data_start + data_bytes) {
    throw TruncatedError("tensor file payload has " + std::to_string(bytes.size() - data_start) + " of " +
                         std::to_string(data_bytes) + " bytes");
  }
  if (bytes.size() > data_start + data_bytes) throw CheckpointError("trailing bytes after tensor payload");
  for (std::size_t i = 0; i < contents.tensors.size(); ++i) {
    TensorFileEntry& t = contents.tensors[i];
    const std::size_t n = shape_numel(t.shape);
    if (offsets[i] + n * 4 > data_bytes) {
      throw TruncatedError("tensor '" + t.name + "' extends past the end of the payload");
    }
    t.values.resize(n);
    const char* p = bytes.data() + data_start + offsets[i];
    for (std::size_t k = 0; k < n; ++k) t.values[k] = std::bit_cast<float>(get_u32_le(p + 4 * k));
  }
  return contents;
}

void write_file_atomically(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place at " + path.string());
  }
}

void write_tensor_file(const std::filesystem::path& path, const TensorFileContents& contents) {
  write_file_atomically(path, serialize_tensor_file(contents));
}

TensorFileContents read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tensor_file(buf.str());
}

}  // namespace entlm
