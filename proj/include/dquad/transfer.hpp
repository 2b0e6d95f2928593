#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "dquad/errors.hpp"
#include "dquad/region.hpp"

namespace dquad {

/// Regions moving from a donor to a receiver. Only coordinates travel; the
/// receiver re-evaluates them. The attached bounds are the donor's last
/// estimates for the batch (sum of errors, sum of |integral|) and stand in for
/// the regions in the global error while they are in transit.
struct TransferBatch {
  std::uint32_t from_rank = 0;
  std::uint32_t to_rank = 0;
  std::uint64_t sequence_id = 0;
  std::uint16_t dim = 1;
  std::vector<double> bounds;  // region_count x (lo_0, hi_0, lo_1, hi_1, ...)
  double attached_error_bound = 0.0;
  double attached_integral_bound = 0.0;

  [[nodiscard]] std::size_t region_count() const noexcept { return bounds.size() / (2 * std::size_t{dim}); }

  [[nodiscard]] std::span<const double> region_bounds(std::size_t i) const {
    const std::size_t w = 2 * std::size_t{dim};
    return std::span<const double>(bounds).subspan(i * w, w);
  }

  /// Appends every region to `store` as not-yet-evaluated.
  void unpack_into(RegionStore& store) const {
    if (store.dim() != dim) throw ContractViolation("TransferBatch: dimension mismatch on unpack");
    for (std::size_t i = 0; i < region_count(); ++i) store.push_back_bounds(region_bounds(i), 0.0, 0.0, -1);
  }
};

// Wire format, little-endian:
//   u32 from_rank | u32 to_rank | u64 sequence_id | u32 region_count | u16 dimension
//   region_count x (2d x f64: lo then hi for each axis)
//   f64 attached_error_bound | f64 attached_integral_bound

inline constexpr std::size_t kTransferHeaderBytes = 4 + 4 + 8 + 4 + 2;

namespace wire {

inline void put(std::vector<std::byte>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get(std::span<const std::byte> in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw FormatError("TransferBatch: truncated frame");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{std::to_integer<std::uint8_t>(in[pos + static_cast<std::size_t>(i)])} << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

inline void put_f64(std::vector<std::byte>& out, double v) { put(out, std::bit_cast<std::uint64_t>(v), 8); }
inline double get_f64(std::span<const std::byte> in, std::size_t& pos) { return std::bit_cast<double>(get(in, pos, 8)); }

}  // namespace wire

[[nodiscard]] inline std::size_t encoded_size(const TransferBatch& b) {
  return kTransferHeaderBytes + b.bounds.size() * 8 + 16;
}

[[nodiscard]] inline std::vector<std::byte> encode(const TransferBatch& b) {
  if (b.dim == 0 || b.bounds.size() % (2 * std::size_t{b.dim}) != 0) {
    throw ContractViolation("TransferBatch: bounds do not match dimension");
  }
  std::vector<std::byte> out;
  out.reserve(encoded_size(b));
  wire::put(out, b.from_rank, 4);
  wire::put(out, b.to_rank, 4);
  wire::put(out, b.sequence_id, 8);
  wire::put(out, b.region_count(), 4);
  wire::put(out, b.dim, 2);
  for (double v : b.bounds) wire::put_f64(out, v);
  wire::put_f64(out, b.attached_error_bound);
  wire::put_f64(out, b.attached_integral_bound);
  return out;
}

[[nodiscard]] inline TransferBatch decode(std::span<const std::byte> frame) {
  std::size_t pos = 0;
  TransferBatch b;
  b.from_rank = static_cast<std::uint32_t>(wire::get(frame, pos, 4));
  b.to_rank = static_cast<std::uint32_t>(wire::get(frame, pos, 4));
  b.sequence_id = wire::get(frame, pos, 8);
  const auto count = static_cast<std::size_t>(wire::get(frame, pos, 4));
  b.dim = static_cast<std::uint16_t>(wire::get(frame, pos, 2));
  if (b.dim == 0) throw FormatError("TransferBatch: zero dimension");
  const std::size_t values = count * 2 * std::size_t{b.dim};
  if (frame.size() != kTransferHeaderBytes + values * 8 + 16) throw FormatError("TransferBatch: frame length mismatch");
  b.bounds.resize(values);
  for (auto& v : b.bounds) v = wire::get_f64(frame, pos);
  b.attached_error_bound = wire::get_f64(frame, pos);
  b.attached_integral_bound = wire::get_f64(frame, pos);
  return b;
}

}  // namespace dquad
