#pragma once

#include <array>
#include <vector>

#include "slgan/tensor.hpp"

namespace slgan {

constexpr int kNumDomains = 2;

enum class Domain : int { non_makeup = 0, makeup = 1 };

inline Domain opposite(Domain d) { return d == Domain::makeup ? Domain::non_makeup : Domain::makeup; }
const char* domain_name(Domain d);

/// One-hot condition vector; index 0 = non-makeup, index 1 = makeup.
struct DomainCondition {
  std::array<double, kNumDomains> onehot{};

  static DomainCondition of(Domain d);
  /// Throws InvalidCondition unless exactly one entry equals 1 and the rest 0.
  Domain domain() const;
};

using DomainBatch = std::vector<Domain>;

/// Binary region masks, each N×1×H×W with entries in {0, 1}. The lips, eyes
/// and face regions are pairwise disjoint and contained in full_face.
struct RegionMasks {
  Tensor lips, eyes, face, full_face;
};

}  // namespace slgan
