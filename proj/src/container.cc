#include "msdn/container.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "msdn/errors.h"

namespace msdn {

static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Tensor make_real_tensor(std::string name, DType dtype, std::vector<std::uint32_t> dims,
                        std::vector<double> values) {
  if (dtype == DType::kI32) throw ArgumentError("make_real_tensor: i32 dtype for " + name);
  Tensor t{std::move(name), dtype, std::move(dims), std::move(values), {}};
  if (t.reals.size() != t.element_count()) {
    throw ShapeError("tensor '" + t.name + "': payload length does not match dims");
  }
  return t;
}

Tensor make_int_tensor(std::string name, std::vector<std::uint32_t> dims,
                       std::vector<std::int32_t> values) {
  Tensor t{std::move(name), DType::kI32, std::move(dims), {}, std::move(values)};
  if (t.ints.size() != t.element_count()) {
    throw ShapeError("tensor '" + t.name + "': payload length does not match dims");
  }
  return t;
}

Tensor matrix_tensor(std::string name, const Matrix& m, DType dtype) {
  return make_real_tensor(std::move(name), dtype,
                          {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                          m.data());
}

Tensor index_tensor(std::string name, std::span<const int> values) {
  return make_int_tensor(std::move(name), {static_cast<std::uint32_t>(values.size())},
                         std::vector<std::int32_t>(values.begin(), values.end()));
}

Matrix tensor_to_matrix(const Tensor& t) {
  if (!t.is_real() || t.dims.size() != 2) {
    throw ShapeError("tensor '" + t.name + "' is not a rank-2 real tensor");
  }
  return Matrix(t.dims[0], t.dims[1], t.reals);
}

std::vector<int> tensor_to_indices(const Tensor& t) {
  if (t.is_real() || t.dims.size() != 1) {
    throw ShapeError("tensor '" + t.name + "' is not a rank-1 i32 tensor");
  }
  return {t.ints.begin(), t.ints.end()};
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedError(std::string("container truncated while reading ") + what + " at offset " +
                           std::to_string(pos_));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le(const char* what) {
    using U = std::make_unsigned_t<T>;
    auto s = take(sizeof(T), what);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return static_cast<T>(u);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_container(std::span<const Tensor> tensors) {
  Writer w;
  w.bytes(kContainerMagic, 4);
  w.le<std::uint32_t>(kContainerVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ArgumentError("tensor name too long: " + t.name.substr(0, 32) + "...");
    }
    if (t.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw ArgumentError("tensor '" + t.name + "' has too many dimensions");
    }
    const std::size_t count = t.element_count();
    if ((t.is_real() ? t.reals.size() : t.ints.size()) != count) {
      throw ShapeError("tensor '" + t.name + "': payload length does not match dims");
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint32_t>(d);
    switch (t.dtype) {
      case DType::kF32:
        for (double v : t.reals) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        break;
      case DType::kF64:
        for (double v : t.reals) w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
        break;
      case DType::kI32:
        for (auto v : t.ints) w.le<std::int32_t>(v);
        break;
    }
  }
  return w.take();
}

std::vector<Tensor> parse_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) {
    throw BadMagicError("bad magic: expected \"ZSLD\", got \"" +
                        std::string(reinterpret_cast<const char*>(magic.data()), 4) + "\"");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kContainerVersion) {
    throw VersionError("unsupported container version " + std::to_string(version) + " (expected " +
                       std::to_string(kContainerVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const auto name_len = r.le<std::uint16_t>("name length");
    auto name = r.take(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype != 1 && dtype != 2 && dtype != 3) {
      throw DataError("tensor '" + t.name + "': unknown dtype " + std::to_string(dtype));
    }
    t.dtype = static_cast<DType>(dtype);
    const auto ndim = r.le<std::uint8_t>("ndim");
    for (std::uint8_t d = 0; d < ndim; ++d) t.dims.push_back(r.le<std::uint32_t>("dims"));
    const std::size_t n = t.element_count();
    const std::size_t width = t.dtype == DType::kF64 ? 8 : 4;
    if (n != 0 && width > (bytes.size() / n)) {
      throw TruncatedError("tensor '" + t.name + "' payload exceeds file size");
    }
    switch (t.dtype) {
      case DType::kF32:
        t.reals.resize(n);
        for (auto& v : t.reals) v = std::bit_cast<float>(r.le<std::uint32_t>("f32 payload"));
        break;
      case DType::kF64:
        t.reals.resize(n);
        for (auto& v : t.reals) v = std::bit_cast<double>(r.le<std::uint64_t>("f64 payload"));
        break;
      case DType::kI32:
        t.ints.resize(n);
        for (auto& v : t.ints) v = r.le<std::int32_t>("i32 payload");
        break;
    }
    tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw DataError("trailing bytes after last tensor");
  return tensors;
}

void write_container(const std::filesystem::path& path, std::span<const Tensor> tensors) {
  const auto bytes = serialize_container(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Tensor> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

const Tensor* find_tensor(std::span<const Tensor> tensors, std::string_view name) {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

}  // namespace msdn
