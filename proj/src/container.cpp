#include "samihs/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace samihs {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'A', 'M', 'I', 'H', 'S', 'N', 'A'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_raw(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ContainerError("container: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void atomic_write(const std::filesystem::path& path, const char* data, std::size_t n) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ContainerError("cannot open " + tmp.string() + " for writing");
    f.write(data, static_cast<std::streamsize>(n));
    if (!f) {
      f.close();
      std::filesystem::remove(tmp);
      throw ContainerError("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

const char* role_name(TensorRole role) {
  switch (role) {
    case TensorRole::data: return "data";
    case TensorRole::trainable: return "trainable";
    case TensorRole::frozen: return "frozen";
    case TensorRole::buffer: return "buffer";
  }
  return "unknown";
}

ArrayEntry& NamedArrayFile::slot(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e;
  entries_.push_back({});
  entries_.back().name = name;
  return entries_.back();
}

void NamedArrayFile::put(const std::string& name, const Matrix& m, TensorRole role) {
  ArrayEntry& e = slot(name);
  e.dtype = DType::f64;
  e.role = role;
  e.rows = m.rows();
  e.cols = m.cols();
  e.f64 = m.values();
  e.u8.clear();
}

void NamedArrayFile::put(const std::string& name, const Mask& m, TensorRole role) {
  ArrayEntry& e = slot(name);
  e.dtype = DType::u8;
  e.role = role;
  e.rows = m.rows();
  e.cols = m.cols();
  e.u8 = m.values();
  e.f64.clear();
}

const ArrayEntry* NamedArrayFile::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

Matrix NamedArrayFile::matrix(const std::string& name) const {
  const ArrayEntry* e = find(name);
  if (!e) throw ContainerError("missing array '" + name + "'");
  if (e->dtype == DType::f64) return Matrix(e->rows, e->cols, e->f64);
  std::vector<double> v(e->u8.begin(), e->u8.end());
  return Matrix(e->rows, e->cols, std::move(v));
}

Mask NamedArrayFile::mask(const std::string& name) const {
  const ArrayEntry* e = find(name);
  if (!e) throw ContainerError("missing array '" + name + "'");
  if (e->dtype != DType::u8) throw ContainerError("array '" + name + "' is not uint8");
  return Mask(e->rows, e->cols, e->u8);
}

std::vector<std::uint8_t> NamedArrayFile::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_raw(out, kVersion);
  const std::string meta = metadata.dump();
  put_raw(out, static_cast<std::uint64_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_raw(out, static_cast<std::uint64_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_raw(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_raw(out, static_cast<std::uint8_t>(e.dtype));
    put_raw(out, static_cast<std::uint8_t>(e.role));
    put_raw(out, static_cast<std::uint64_t>(e.rows));
    put_raw(out, static_cast<std::uint64_t>(e.cols));
    if (e.dtype == DType::f64) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(e.f64.data());
      out.insert(out.end(), p, p + e.f64.size() * sizeof(double));
    } else {
      out.insert(out.end(), e.u8.begin(), e.u8.end());
    }
  }
  return out;
}

NamedArrayFile NamedArrayFile::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ContainerError("container: bad magic");
  if (r.get<std::uint32_t>() != kVersion) throw ContainerError("container: unsupported version");
  NamedArrayFile f;
  const auto meta_len = r.get<std::uint64_t>();
  std::string meta(meta_len, '\0');
  r.read(meta.data(), meta.size());
  try {
    f.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(std::string("container: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    ArrayEntry e;
    e.name.resize(r.get<std::uint32_t>());
    r.read(e.name.data(), e.name.size());
    const auto dtype = r.get<std::uint8_t>();
    const auto role = r.get<std::uint8_t>();
    if (dtype > 1 || role > 3) throw ContainerError("container: bad entry header for " + e.name);
    e.dtype = static_cast<DType>(dtype);
    e.role = static_cast<TensorRole>(role);
    e.rows = r.get<std::uint64_t>();
    e.cols = r.get<std::uint64_t>();
    const std::size_t n = e.rows * e.cols;
    if (e.dtype == DType::f64) {
      e.f64.resize(n);
      r.read(e.f64.data(), n * sizeof(double));
    } else {
      e.u8.resize(n);
      r.read(e.u8.data(), n);
    }
    if (f.contains(e.name)) throw ContainerError("container: duplicate entry " + e.name);
    f.entries_.push_back(std::move(e));
  }
  if (!r.done()) throw ContainerError("container: trailing bytes");
  return f;
}

void NamedArrayFile::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  atomic_write(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

NamedArrayFile NamedArrayFile::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, text.data(), text.size());
}

}  // namespace samihs
