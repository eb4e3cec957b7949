#include "udkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace udkit::checkpoint {
namespace {

constexpr char kMagic[4] = {'U', 'D', 'K', '1'};

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t NamedArray::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string serialize(const std::vector<NamedArray>& arrays) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.element_count() != a.data.size()) {
      throw std::invalid_argument("array " + a.name + " has " + std::to_string(a.data.size()) +
                                  " values but shape needs " + std::to_string(a.element_count()));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_le<std::uint64_t>(out, d);
    for (float f : a.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedArray> deserialize(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_bytes(4, "magic") != std::string(kMagic, 4)) throw FormatError("not a UDK1 checkpoint");
  const auto count = in.get_le<std::uint32_t>("array count");
  std::vector<NamedArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = in.get_bytes(in.get_le<std::uint32_t>("name length"), "name");
    const auto rank = in.get_le<std::uint32_t>("rank");
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(in.get_le<std::uint64_t>("dimension"));
    const auto n = a.element_count();
    if (n > bytes.size()) throw FormatError("array " + a.name + " claims more data than the file holds");
    a.data.resize(n);
    for (auto& f : a.data) f = std::bit_cast<float>(in.get_le<std::uint32_t>("payload"));
    arrays.push_back(std::move(a));
  }
  if (!in.done()) throw FormatError("trailing bytes after last checkpoint array");
  return arrays;
}

void write(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  const std::string bytes = serialize(arrays);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedArray> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace udkit::checkpoint

namespace udkit::checkpoint {
namespace {

std::string dims_string(const std::vector<std::uint64_t>& dims) {
  Shape s(dims.begin(), dims.end());
  return shape_string(s);
}

}  // namespace

std::vector<NamedArray> export_parameters(std::span<Parameter* const> params) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const Parameter* p : params) {
    NamedArray a;
    a.name = p->name();
    a.shape.assign(p->shape().begin(), p->shape().end());
    a.data.resize(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      a.data[static_cast<std::size_t>(i)] = static_cast<float>(p->value.data()[i]);
    }
    out.push_back(std::move(a));
  }
  return out;
}

void import_parameters(std::span<Parameter* const> params, const std::vector<NamedArray>& arrays,
                       bool allow_extra) {
  std::unordered_map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name());
    if (it == by_name.end()) throw std::invalid_argument("checkpoint is missing array " + p->name());
    const NamedArray& a = *it->second;
    const std::vector<std::uint64_t> want(p->shape().begin(), p->shape().end());
    if (a.shape != want) {
      throw std::invalid_argument("array " + p->name() + " has shape " + dims_string(a.shape) +
                                  " in the checkpoint but the model expects " + dims_string(want));
    }
  }
  if (!allow_extra) {
    std::unordered_map<std::string, bool> known;
    for (const Parameter* p : params) known[p->name()] = true;
    for (const auto& a : arrays) {
      if (!known.count(a.name)) throw std::invalid_argument("checkpoint has unexpected array " + a.name);
    }
  }
  for (Parameter* p : params) {
    const NamedArray& a = *by_name.at(p->name());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = static_cast<double>(a.data[static_cast<std::size_t>(i)]);
    }
  }
}

}  // namespace udkit::checkpoint
