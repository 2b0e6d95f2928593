#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dquad/compensated_sum.hpp"
#include "dquad/errors.hpp"
#include "dquad/region.hpp"
#include "dquad/transfer.hpp"

namespace dquad {

enum class Role { donor, receiver, neutral };

/// Mean active-region count per worker.
[[nodiscard]] inline double fair_share(std::span<const std::size_t> counts) {
  if (counts.empty()) throw ContractViolation("fair_share: need at least one worker");
  const auto total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  return static_cast<double>(total) / static_cast<double>(counts.size());
}

/// Donor above ceil(share), receiver below floor(share), neutral in between.
[[nodiscard]] inline Role classify_rank(std::size_t count, double share) {
  const double c = static_cast<double>(count);
  if (c > std::ceil(share)) return Role::donor;
  if (c < std::floor(share)) return Role::receiver;
  return Role::neutral;
}

using RankPair = std::pair<int, int>;

/// Circle-method tournament schedule. Rank 0 stays fixed and meets rank
/// 1 + (round mod (P-1)); the others pair symmetrically around it. Odd P adds
/// a phantom rank and whoever meets it sits the round out. Pairs are returned
/// as (low, high), sorted by the low rank.
[[nodiscard]] inline std::vector<RankPair> round_robin_pairs(int workers, std::uint64_t round) {
  std::vector<RankPair> pairs;
  if (workers < 2) return pairs;
  const int n = workers % 2 == 0 ? workers : workers + 1;
  const int ring = n - 1;
  const auto r = static_cast<int>(round % static_cast<std::uint64_t>(ring));
  auto add = [&](int a, int b) {
    if (a >= workers || b >= workers) return;
    pairs.emplace_back(std::min(a, b), std::max(a, b));
  };
  add(0, 1 + r);
  for (int k = 1; k < n / 2; ++k) {
    add(1 + (r + k) % ring, 1 + ((r - k) % ring + ring) % ring);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

/// Number of rounds after which round_robin_pairs repeats.
[[nodiscard]] inline int round_robin_cycle(int workers) {
  if (workers < 2) return 1;
  return workers % 2 == 0 ? workers - 1 : workers;
}

struct TransferPlan {
  int from = 0;
  int to = 0;
  std::size_t count = 0;
};

/// Transfer for one scheduled pair, or nothing unless exactly one side is a
/// donor and the other a receiver. The size is the smallest of the cap, the
/// donor's excess over ceil(share) and the receiver's deficit under floor(share).
[[nodiscard]] inline std::optional<TransferPlan> plan_transfer(RankPair pair, std::span<const std::size_t> counts,
                                                               std::size_t cap) {
  const auto [a, b] = pair;
  if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= counts.size() || static_cast<std::size_t>(b) >= counts.size() || a == b) {
    throw ContractViolation("plan_transfer: pair outside the worker range");
  }
  const double share = fair_share(counts);
  const auto ua = static_cast<std::size_t>(a);
  const auto ub = static_cast<std::size_t>(b);
  const Role ra = classify_rank(counts[ua], share);
  const Role rb = classify_rank(counts[ub], share);
  int donor = -1;
  int receiver = -1;
  if (ra == Role::donor && rb == Role::receiver) {
    donor = a;
    receiver = b;
  } else if (rb == Role::donor && ra == Role::receiver) {
    donor = b;
    receiver = a;
  } else {
    return std::nullopt;
  }
  const auto excess = counts[static_cast<std::size_t>(donor)] - static_cast<std::size_t>(std::ceil(share));
  const auto deficit = static_cast<std::size_t>(std::floor(share)) - counts[static_cast<std::size_t>(receiver)];
  const std::size_t n = std::min({cap, excess, deficit});
  return TransferPlan{donor, receiver, std::max<std::size_t>(n, 1)};
}

/// Pairing and sizing strategy. Only round robin ships; the interface leaves
/// room for topology-aware or error-weighted policies.
class RedistributionPolicy {
 public:
  virtual ~RedistributionPolicy() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::vector<RankPair> pairs(int workers, std::uint64_t round) const = 0;
  [[nodiscard]] virtual std::optional<TransferPlan> plan(RankPair pair, std::span<const std::size_t> counts,
                                                         std::size_t cap) const = 0;
};

class RoundRobinPolicy final : public RedistributionPolicy {
 public:
  [[nodiscard]] std::string name() const override { return "round_robin"; }
  [[nodiscard]] std::vector<RankPair> pairs(int workers, std::uint64_t round) const override {
    return round_robin_pairs(workers, round);
  }
  [[nodiscard]] std::optional<TransferPlan> plan(RankPair pair, std::span<const std::size_t> counts,
                                                 std::size_t cap) const override {
    return plan_transfer(pair, counts, cap);
  }
};

struct RedistributionConfig {
  std::size_t cap = 512;
  std::size_t initial_subdomains_per_rank = 8;
  std::shared_ptr<const RedistributionPolicy> policy = std::make_shared<RoundRobinPolicy>();

  void validate() const {
    if (cap < 1) throw ContractViolation("RedistributionConfig: cap must be >= 1");
    if (initial_subdomains_per_rank < 1) throw ContractViolation("RedistributionConfig: need >= 1 initial subdomain per rank");
    if (!policy) throw ContractViolation("RedistributionConfig: no policy");
  }
};

/// Indices of the `n` largest-error regions, largest first (lower index wins ties).
[[nodiscard]] inline std::vector<std::size_t> top_error_indices(const RegionStore& store, std::size_t n) {
  std::vector<std::size_t> idx(store.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  n = std::min(n, idx.size());
  const auto err = store.error();
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) { return err[a] > err[b] || (err[a] == err[b] && a < b); });
  idx.resize(n);
  return idx;
}

/// Removes the `n` largest-error regions from `donor` and packs their
/// coordinates, attaching the sum of their errors and |integrals|.
[[nodiscard]] inline TransferBatch make_batch(RegionStore& donor, int from, int to, std::uint64_t sequence_id,
                                              std::size_t n) {
  const auto picked = top_error_indices(donor, n);
  CompensatedSum err;
  CompensatedSum mag;
  for (std::size_t i : picked) {
    err.add(donor.error()[i]);
    mag.add(std::fabs(donor.integral()[i]));
  }
  RegionStore taken = donor.extract(picked);
  TransferBatch b;
  b.from_rank = static_cast<std::uint32_t>(from);
  b.to_rank = static_cast<std::uint32_t>(to);
  b.sequence_id = sequence_id;
  b.dim = static_cast<std::uint16_t>(donor.dim());
  b.bounds.reserve(taken.size() * 2 * static_cast<std::size_t>(donor.dim()));
  for (std::size_t i = 0; i < taken.size(); ++i) {
    for (int a = 0; a < donor.dim(); ++a) {
      b.bounds.push_back(taken.lower(a)[i]);
      b.bounds.push_back(taken.upper(a)[i]);
    }
  }
  b.attached_error_bound = err.value();
  b.attached_integral_bound = mag.value();
  return b;
}

}  // namespace dquad
