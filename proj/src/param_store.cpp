#include "spen/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spen {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kState: return "state";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

Shape Shape::from_dims(std::span<const std::uint64_t> dims) {
  switch (dims.size()) {
    case 0: return scalar();
    case 1: return vector(dims[0]);
    case 2: return matrix(dims[0], dims[1]);
    default:
      throw Error(ErrorKind::kFormat,
                  "rank " + std::to_string(dims.size()) + " not supported");
  }
}

std::vector<std::uint64_t> Shape::dims() const {
  if (rank_ == 0) return {};
  if (rank_ == 1) return {dims_[0]};
  return {dims_[0], dims_[1]};
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  auto d = dims();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i) os << 'x';
    os << d[i];
  }
  os << ']';
  return os.str();
}

const char* group_name(Group g) {
  switch (g) {
    case Group::kEnergy: return "energy";
    case Group::kCostAugmented: return "cost";
    case Group::kTestTime: return "test";
  }
  return "?";
}

Group group_from_param_name(std::string_view name) {
  if (name.starts_with("energy/")) return Group::kEnergy;
  if (name.starts_with("cost/")) return Group::kCostAugmented;
  if (name.starts_with("test/")) return Group::kTestTime;
  throw Error(ErrorKind::kFormat,
              "parameter name without group prefix: " + std::string(name));
}

Param& ParamStore::add(std::string name, Group group, Shape shape,
                       std::vector<double> values) {
  if (index_.contains(name)) {
    throw Error(ErrorKind::kState, "duplicate parameter " + name);
  }
  if (values.size() != shape.size()) {
    throw Error(ErrorKind::kShape, "parameter " + name + " has " +
                                       std::to_string(values.size()) +
                                       " values for shape " + shape.str());
  }
  index_.emplace(name, params_.size());
  Param& p = params_.emplace_back();
  p.name = std::move(name);
  p.group = group;
  p.shape = shape;
  p.value = std::move(values);
  return p;
}

Param& ParamStore::add(std::string name, Group group, Shape shape) {
  return add(std::move(name), group, shape,
             std::vector<double>(shape.size(), 0.0));
}

bool ParamStore::contains(std::string_view name) const {
  return index_of(name) >= 0;
}

std::int32_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : static_cast<std::int32_t>(it->second);
}

Param& ParamStore::get(std::string_view name) {
  auto i = index_of(name);
  if (i < 0) throw Error(ErrorKind::kState, "no parameter " + std::string(name));
  return params_[static_cast<std::size_t>(i)];
}

const Param& ParamStore::get(std::string_view name) const {
  auto i = index_of(name);
  if (i < 0) throw Error(ErrorKind::kState, "no parameter " + std::string(name));
  return params_[static_cast<std::size_t>(i)];
}

void ParamStore::zero_grad(GroupSet groups) {
  for (auto& p : params_) {
    if (groups.contains(p.group)) p.grad.assign(p.size(), 0.0);
  }
}

double ParamStore::grad_norm(GroupSet groups) const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!groups.contains(p.group)) continue;
    for (double g : p.grad) s += g * g;
  }
  return std::sqrt(s);
}

std::size_t ParamStore::count(GroupSet groups) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (groups.contains(p.group)) n += p.size();
  }
  return n;
}

std::size_t ParamStore::count_prefix(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (std::string_view(p.name).starts_with(prefix)) n += p.size();
  }
  return n;
}

void ParamStore::copy_values(std::string_view src_prefix,
                             std::string_view dst_prefix) {
  std::size_t copied = 0;
  for (const auto& src : params_) {
    std::string_view name = src.name;
    if (!name.starts_with(src_prefix)) continue;
    std::string dst_name =
        std::string(dst_prefix) + std::string(name.substr(src_prefix.size()));
    auto di = index_of(dst_name);
    if (di < 0) {
      throw Error(ErrorKind::kState, "no counterpart " + dst_name + " for " +
                                         src.name);
    }
    Param& dst = params_[static_cast<std::size_t>(di)];
    if (!(dst.shape == src.shape)) {
      throw Error(ErrorKind::kShape, "shape mismatch copying " + src.name +
                                         " " + src.shape.str() + " to " +
                                         dst_name + " " + dst.shape.str());
    }
    dst.value = src.value;
    ++copied;
  }
  std::size_t dst_count = 0;
  for (const auto& p : params_) {
    if (std::string_view(p.name).starts_with(dst_prefix)) ++dst_count;
  }
  if (copied == 0 || copied != dst_count) {
    throw Error(ErrorKind::kState,
                "architecture mismatch between " + std::string(src_prefix) +
                    " and " + std::string(dst_prefix));
  }
}

std::uint64_t ParamStore::checksum(GroupSet groups) const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_) {
    if (!groups.contains(p.group)) continue;
    for (double v : p.value) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::kFormat, path_ + ": " + what + " at byte " +
                                        std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_binary_entries(const std::filesystem::path& path,
                          std::string_view tag,
                          std::span<const BinaryEntry> entries) {
  std::string out;
  out.append(tag);
  put_u64(out, kBinaryFormatVersion);
  put_u64(out, entries.size());
  for (const auto& e : entries) {
    put_u64(out, e.name.size());
    out.append(e.name);
    auto dims = e.shape.dims();
    put_u64(out, dims.size());
    for (auto d : dims) put_u64(out, d);
    for (double v : e.values) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<BinaryEntry> read_binary_entries(const std::filesystem::path& path,
                                             std::string_view tag) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(tag.size()) != tag) {
    r.fail("bad header tag (expected " + std::string(tag) + ")");
  }
  if (auto v = r.u64(); v != kBinaryFormatVersion) {
    r.fail("unsupported format version " + std::to_string(v));
  }
  std::uint64_t n = r.u64();
  std::vector<BinaryEntry> entries;
  for (std::uint64_t i = 0; i < n; ++i) {
    BinaryEntry e;
    std::uint64_t len = r.u64();
    if (len > r.remaining()) r.fail("name length exceeds file");
    e.name = r.bytes(len);
    std::uint64_t rank = r.u64();
    if (rank > 2) r.fail("rank " + std::to_string(rank) + " not supported");
    std::vector<std::uint64_t> dims(rank);
    for (auto& d : dims) d = r.u64();
    e.shape = Shape::from_dims(dims);
    if (e.shape.size() > r.remaining() / 8) r.fail("values exceed file");
    e.values.resize(e.shape.size());
    for (auto& v : e.values) v = r.f64();
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return entries;
}

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  std::vector<BinaryEntry> entries;
  entries.reserve(store.size());
  for (const auto& p : store.params()) {
    entries.push_back({p.name, p.shape, p.value});
  }
  write_binary_entries(path, kParamFileTag, entries);
}

ParamStore load_params(const std::filesystem::path& path) {
  ParamStore store;
  for (auto& e : read_binary_entries(path, kParamFileTag)) {
    Group g = group_from_param_name(e.name);
    store.add(std::move(e.name), g, e.shape, std::move(e.values));
  }
  return store;
}

}  // namespace spen
