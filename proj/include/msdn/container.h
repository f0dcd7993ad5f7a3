#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msdn/ndmath.h"

namespace msdn {

// Little-endian tensor container:
//
//   "ZSLD" | u32 version | u32 tensor count
//   per tensor: u16 name length | name bytes | u8 dtype | u8 ndim |
//               ndim × u32 dims | row-major payload
//
// dtype 1 = f32, 2 = f64, 3 = i32.
inline constexpr char kContainerMagic[4] = {'Z', 'S', 'L', 'D'};
inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kI32 = 3 };

// One named tensor. Real payloads (f32 or f64) live in `reals`, i32 payloads
// in `ints`; the other vector stays empty.
struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<double> reals;
  std::vector<std::int32_t> ints;

  std::size_t element_count() const;
  bool is_real() const { return dtype != DType::kI32; }

  bool operator==(const Tensor&) const = default;
};

Tensor make_real_tensor(std::string name, DType dtype, std::vector<std::uint32_t> dims,
                        std::vector<double> values);
Tensor make_int_tensor(std::string name, std::vector<std::uint32_t> dims,
                       std::vector<std::int32_t> values);
Tensor matrix_tensor(std::string name, const Matrix& m, DType dtype);
Tensor index_tensor(std::string name, std::span<const int> values);

// Views a rank-2 real tensor as a Matrix. Throws ShapeError otherwise.
Matrix tensor_to_matrix(const Tensor& t);
std::vector<int> tensor_to_indices(const Tensor& t);

std::vector<std::uint8_t> serialize_container(std::span<const Tensor> tensors);
std::vector<Tensor> parse_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, std::span<const Tensor> tensors);
std::vector<Tensor> read_container(const std::filesystem::path& path);

const Tensor* find_tensor(std::span<const Tensor> tensors, std::string_view name);

}  // namespace msdn
