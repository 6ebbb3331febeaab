#pragma once

// CANV1 container: the on-disk form of checkpoints and synthetic datasets.
//
//   "CANV1\n"
//   "header <H>\n"                    H = byte length of the header text
//   header text (H bytes):
//     "block <name> <n>\n" <n raw bytes> "\n"          (repeated)
//     "tensor <name> <f32|f64> <rank> <d0> ... <offset> <nbytes>\n"   (repeated)
//     "end\n"
//   payload: tensor arrays, little-endian IEEE-754, in manifest order;
//            offsets are relative to the first payload byte.
//
// Blocks carry canonical text (net specs, configs, training state).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <unistd.h>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/nets.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

enum class DType { f32, f64 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline std::string_view to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }
inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

class Container {
 public:
  static constexpr std::string_view kMagic = "CANV1\n";

  void set_block(const std::string& name, std::string text) {
    check_name(name);
    blocks_[name] = std::move(text);
  }

  bool has_block(const std::string& name) const { return blocks_.count(name) != 0; }

  const std::string& block(const std::string& name) const {
    const auto it = blocks_.find(name);
    if (it == blocks_.end()) throw FormatError("container: missing block '" + name + "'");
    return it->second;
  }

  template <typename T>
  void add_tensor(const std::string& name, const Tensor<T>& t) {
    check_name(name);
    Entry e{name, dtype_of<T>(), t.shape(), std::string(t.size() * sizeof(T), '\0')};
    to_little_endian(t.data().data(), t.size(), e.bytes.data());
    for (auto& existing : tensors_) {
      if (existing.name == name) {
        existing = std::move(e);
        return;
      }
    }
    tensors_.push_back(std::move(e));
  }

  bool has_tensor(const std::string& name) const { return find(name) != nullptr; }

  DType dtype(const std::string& name) const { return entry(name).dtype; }

  template <typename T>
  Tensor<T> tensor(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != dtype_of<T>()) {
      throw FormatError("container: tensor '" + name + "' is " + std::string(to_string(e.dtype)) + ", requested " +
                        std::string(to_string(dtype_of<T>())));
    }
    Tensor<T> t(e.shape);
    from_little_endian(e.bytes.data(), t.size(), t.data().data());
    return t;
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out;
    for (const auto& e : tensors_) out.push_back(e.name);
    return out;
  }

  std::string serialize() const {
    std::ostringstream header;
    for (const auto& [name, text] : blocks_) header << "block " << name << ' ' << text.size() << '\n' << text << '\n';
    std::size_t offset = 0;
    for (const auto& e : tensors_) {
      header << "tensor " << e.name << ' ' << to_string(e.dtype) << ' ' << e.shape.size();
      for (auto d : e.shape) header << ' ' << d;
      header << ' ' << offset << ' ' << e.bytes.size() << '\n';
      offset += e.bytes.size();
    }
    header << "end\n";
    const std::string h = header.str();
    std::string out;
    out.reserve(kMagic.size() + h.size() + offset + 32);
    out += kMagic;
    out += "header " + std::to_string(h.size()) + "\n";
    out += h;
    for (const auto& e : tensors_) out += e.bytes;
    return out;
  }

  static Container parse(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) {
      throw FormatError("container: bad magic (expected CANV1)");
    }
    std::size_t pos = kMagic.size();
    const auto line_end = bytes.find('\n', pos);
    if (line_end == std::string_view::npos) throw FormatError("container: truncated header line");
    const std::string header_line(bytes.substr(pos, line_end - pos));
    std::size_t header_size = 0;
    if (std::sscanf(header_line.c_str(), "header %zu", &header_size) != 1) {
      throw FormatError("container: malformed header line");
    }
    pos = line_end + 1;
    if (bytes.size() < pos + header_size) throw FormatError("container: truncated header");
    const std::string_view header = bytes.substr(pos, header_size);
    const std::size_t payload = pos + header_size;

    Container c;
    std::size_t hp = 0;
    auto next_line = [&]() {
      const auto nl = header.find('\n', hp);
      if (nl == std::string_view::npos) throw FormatError("container: unterminated header entry");
      std::string line(header.substr(hp, nl - hp));
      hp = nl + 1;
      return line;
    };
    for (;;) {
      const std::string line = next_line();
      std::istringstream is(line);
      std::string kind, name;
      is >> kind;
      if (kind == "end") break;
      is >> name;
      if (kind == "block") {
        std::size_t n = 0;
        if (!(is >> n) || hp + n + 1 > header.size()) throw FormatError("container: bad block '" + name + "'");
        c.blocks_[name] = std::string(header.substr(hp, n));
        hp += n + 1;
      } else if (kind == "tensor") {
        std::string dt;
        std::size_t rank = 0, offset = 0, nbytes = 0;
        is >> dt >> rank;
        Entry e;
        e.name = name;
        if (dt == "f32") {
          e.dtype = DType::f32;
        } else if (dt == "f64") {
          e.dtype = DType::f64;
        } else {
          throw FormatError("container: tensor '" + name + "' has unknown dtype '" + dt + "'");
        }
        e.shape.resize(rank);
        for (auto& d : e.shape) is >> d;
        is >> offset >> nbytes;
        if (!is) throw FormatError("container: malformed manifest entry for '" + name + "'");
        if (nbytes != shape_size(e.shape) * dtype_size(e.dtype)) {
          throw FormatError("container: tensor '" + name + "' byte count does not match its shape");
        }
        if (bytes.size() < payload + offset + nbytes) {
          throw FormatError("container: tensor '" + name + "' truncated at byte offset " +
                            std::to_string(bytes.size()));
        }
        e.bytes = std::string(bytes.substr(payload + offset, nbytes));
        c.tensors_.push_back(std::move(e));
      } else {
        throw FormatError("container: unknown header entry '" + kind + "'");
      }
    }
    return c;
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }
  static Container load(const std::filesystem::path& path) { return parse(read_file(path)); }

 private:
  struct Entry {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::string bytes;  // little-endian
  };

  static void check_name(const std::string& name) {
    if (name.empty() || name.find_first_of(" \n\t") != std::string::npos) {
      throw ConfigError("container: invalid entry name '" + name + "'");
    }
  }

  template <typename T>
  static void to_little_endian(const T* src, std::size_t n, char* dst) {
    std::memcpy(dst, src, n * sizeof(T));
    if constexpr (std::endian::native == std::endian::big) swap_bytes(dst, n, sizeof(T));
  }

  template <typename T>
  static void from_little_endian(const char* src, std::size_t n, T* dst) {
    std::memcpy(dst, src, n * sizeof(T));
    if constexpr (std::endian::native == std::endian::big) swap_bytes(reinterpret_cast<char*>(dst), n, sizeof(T));
  }

  static void swap_bytes(char* p, std::size_t n, std::size_t width) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0, b = width - 1; a < b; ++a, --b) std::swap(p[i * width + a], p[i * width + b]);
    }
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : tensors_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  const Entry& entry(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw FormatError("container: missing tensor '" + name + "'");
    return *e;
  }

  std::map<std::string, std::string> blocks_;
  std::vector<Entry> tensors_;
};

// A net is stored as block "<prefix>.spec" plus tensors "<prefix>.<param>".
template <typename T>
void store_net(Container& c, const std::string& prefix, const Net<T>& net) {
  c.set_block(prefix + ".spec", net.spec().to_text());
  for (std::size_t i = 0; i < net.names().size(); ++i) c.add_tensor(prefix + "." + net.names()[i], net.parameters()[i]);
}

template <typename T>
Net<T> load_net(const Container& c, const std::string& prefix) {
  Net<T> net(NetSpec::from_text(c.block(prefix + ".spec")));
  for (const auto& name : net.names()) net.set_parameter(name, c.tensor<T>(prefix + "." + name));
  return net;
}

}  // namespace cgan
