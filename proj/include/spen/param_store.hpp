#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spen/error.hpp"

namespace spen {

// Rank 0 (scalar), 1 (vector) or 2 (matrix). A rank-1 tensor of length n is
// treated as a 1 x n row by the operators.
class Shape {
 public:
  Shape() = default;
  static Shape scalar() { return Shape(); }
  static Shape vector(std::size_t n) { return Shape(1, {n, 0}); }
  static Shape matrix(std::size_t r, std::size_t c) { return Shape(2, {r, c}); }
  static Shape from_dims(std::span<const std::uint64_t> dims);

  int rank() const { return rank_; }
  std::size_t rows() const { return rank_ == 2 ? dims_[0] : 1; }
  std::size_t cols() const {
    return rank_ == 2 ? dims_[1] : (rank_ == 1 ? dims_[0] : 1);
  }
  std::size_t size() const { return rows() * cols(); }
  std::vector<std::uint64_t> dims() const;
  std::string str() const;

  bool operator==(const Shape& o) const {
    return rank_ == o.rank_ && rows() == o.rows() && cols() == o.cols();
  }

 private:
  Shape(int rank, std::array<std::size_t, 2> dims) : rank_(rank), dims_(dims) {}
  int rank_ = 0;
  std::array<std::size_t, 2> dims_{0, 0};
};

// Theta: energy. Phi: cost-augmented inference net. Psi: test-time net.
enum class Group : std::uint8_t { kEnergy = 0, kCostAugmented = 1, kTestTime = 2 };

const char* group_name(Group g);

class GroupSet {
 public:
  constexpr GroupSet() = default;
  constexpr GroupSet(std::initializer_list<Group> groups) {
    for (Group g : groups) bits_ |= bit(g);
  }
  static constexpr GroupSet all() {
    return {Group::kEnergy, Group::kCostAugmented, Group::kTestTime};
  }
  static constexpr GroupSet none() { return {}; }

  constexpr bool contains(Group g) const { return (bits_ & bit(g)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }

 private:
  static constexpr std::uint8_t bit(Group g) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(g));
  }
  std::uint8_t bits_ = 0;
};

struct Param {
  std::string name;
  Group group = Group::kEnergy;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  // Optimizer state: momentum buffer / Adam first and second moments.
  std::vector<double> moment1;
  std::vector<double> moment2;
  std::int64_t step = 0;

  std::size_t size() const { return value.size(); }
  bool has_grad() const { return !grad.empty(); }
};

// Trainable parameters keyed by name, in insertion order. Copyable: a copy is
// a full snapshot including optimizer state.
class ParamStore {
 public:
  Param& add(std::string name, Group group, Shape shape,
             std::vector<double> values);
  Param& add(std::string name, Group group, Shape shape);  // zeros

  bool contains(std::string_view name) const;
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  std::int32_t index_of(std::string_view name) const;  // -1 when absent
  Param& at(std::size_t index) { return params_[index]; }
  const Param& at(std::size_t index) const { return params_[index]; }
  std::size_t size() const { return params_.size(); }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  void zero_grad(GroupSet groups);
  // L2 norm over the gradients of all parameters in `groups`.
  double grad_norm(GroupSet groups) const;
  std::size_t count(GroupSet groups) const;
  std::size_t count_prefix(std::string_view prefix) const;

  // Copies values (not optimizer state) of every entry named src_prefix* to
  // the entry with the same suffix under dst_prefix. Shapes must match.
  void copy_values(std::string_view src_prefix, std::string_view dst_prefix);

  // Order-dependent hash of the values of `groups`; for frozen-ness checks.
  std::uint64_t checksum(GroupSet groups) const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Flat binary container: magic tag, format version, entry count, then per
// entry name, rank, dims and values (all little-endian).
inline constexpr std::string_view kParamFileTag = "SPENPRM1";
inline constexpr std::string_view kDatasetFileTag = "SPENDAT1";
inline constexpr std::uint64_t kBinaryFormatVersion = 1;

struct BinaryEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

void write_binary_entries(const std::filesystem::path& path,
                          std::string_view tag,
                          std::span<const BinaryEntry> entries);
std::vector<BinaryEntry> read_binary_entries(const std::filesystem::path& path,
                                             std::string_view tag);

// Entry names carry the group as a prefix, "energy/", "cost/" or "test/".
void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

Group group_from_param_name(std::string_view name);

}  // namespace spen
