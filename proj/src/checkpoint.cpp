#include "wahnerf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

constexpr char kMagic[8] = {'W', 'A', 'H', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <class T>
  void uint(T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, sizeof(T));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("'" + path_ + "' is truncated");
  }
  template <class T>
  T uint() {
    unsigned char b[sizeof(T)];
    bytes(b, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    if (n > (std::size_t{1} << 32)) throw FormatError("'" + path_ + "' has an implausible string length");
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void write_container(const std::string& path, const Container& c) {
  for (const auto& [name, _] : c.tensors) {
    if (c.strings.count(name)) throw InvalidArgument("container key '" + name + "' used twice");
  }
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint32_t>(kContainerVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size() + c.strings.size()));
  // Merge both maps so entries come out sorted by name.
  auto t = c.tensors.begin();
  auto s = c.strings.begin();
  while (t != c.tensors.end() || s != c.strings.end()) {
    const bool take_tensor = s == c.strings.end() || (t != c.tensors.end() && t->first < s->first);
    const std::string& name = take_tensor ? t->first : s->first;
    w.uint<std::uint8_t>(take_tensor ? 0 : 1);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    if (take_tensor) {
      const ParamTensor& p = t->second;
      if (shape_size(p.shape) != p.values.size()) throw InvalidArgument("tensor '" + name + "' shape/value mismatch");
      w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
      for (std::size_t d : p.shape) w.uint<std::uint64_t>(d);
      for (double v : p.values) w.f64(v);
      ++t;
    } else {
      w.uint<std::uint64_t>(s->second.size());
      w.bytes(s->second.data(), s->second.size());
      ++s;
    }
  }
  w.finish();
}

Container read_container(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("'" + path + "' is not a checkpoint");
  const auto version = r.uint<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError("'" + path + "' has unsupported version " + std::to_string(version));
  }
  const auto count = r.uint<std::uint32_t>();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = r.uint<std::uint8_t>();
    const std::string name = r.str(r.uint<std::uint32_t>());
    if (kind == 0) {
      ParamTensor p;
      const auto ndim = r.uint<std::uint32_t>();
      if (ndim > 8) throw FormatError("'" + path + "': tensor '" + name + "' has too many dimensions");
      for (std::uint32_t d = 0; d < ndim; ++d) p.shape.push_back(static_cast<std::size_t>(r.uint<std::uint64_t>()));
      const std::size_t n = shape_size(p.shape);
      if (n > (std::size_t{1} << 31)) throw FormatError("'" + path + "': tensor '" + name + "' is implausibly large");
      p.values.resize(n);
      for (double& v : p.values) v = r.f64();
      c.tensors.emplace(name, std::move(p));
    } else if (kind == 1) {
      c.strings.emplace(name, r.str(static_cast<std::size_t>(r.uint<std::uint64_t>())));
    } else {
      throw FormatError("'" + path + "': entry '" + name + "' has unknown kind " + std::to_string(kind));
    }
  }
  return c;
}

std::string to_string(const LayerSpec& s) {
  std::ostringstream os;
  os << "pos_levels=" << s.pos_levels << " dir_levels=" << s.dir_levels << " trunk_depth=" << s.trunk_depth
     << " trunk_width=" << s.trunk_width << " skip_layer=" << s.skip_layer << " color_width=" << s.color_width;
  return os.str();
}

LayerSpec layer_spec_from_string(const std::string& text) {
  LayerSpec s;
  std::istringstream is(text);
  std::string item;
  while (is >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("malformed layer spec item '" + item + "'");
    const std::string key = item.substr(0, eq);
    int value = 0;
    try {
      value = std::stoi(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw FormatError("malformed layer spec value in '" + item + "'");
    }
    if (key == "pos_levels") s.pos_levels = value;
    else if (key == "dir_levels") s.dir_levels = value;
    else if (key == "trunk_depth") s.trunk_depth = value;
    else if (key == "trunk_width") s.trunk_width = value;
    else if (key == "skip_layer") s.skip_layer = value;
    else if (key == "color_width") s.color_width = value;
    else throw FormatError("unknown layer spec key '" + key + "'");
  }
  return s;
}

void put_field(Container& c, const FieldParams& params) {
  c.strings["field.spec"] = to_string(params.spec);
  for (const auto& [name, t] : params.tensors) c.tensors["field." + name] = t;
}

FieldParams get_field(const Container& c) {
  auto spec = c.strings.find("field.spec");
  if (spec == c.strings.end()) throw FormatError("checkpoint has no field.spec entry");
  FieldParams p;
  p.spec = layer_spec_from_string(spec->second);
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("field.", 0) == 0) p.tensors[name.substr(6)] = t;
  }
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint field does not match its spec: ") + e.what());
  }
  return p;
}

void save_field(const std::string& path, const FieldParams& params) {
  Container c;
  put_field(c, params);
  write_container(path, c);
}

FieldParams load_field(const std::string& path) { return get_field(read_container(path)); }

}  // namespace wah
