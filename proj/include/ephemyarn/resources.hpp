#pragma once

#include <cstdint>

namespace ephemyarn {

/// A (memory, vcores) quantity. Used both for node capacities and for
/// container requests; (0, 0) is the null profile.
struct ResourceProfile {
  std::int64_t memory_mb = 0;
  std::int64_t vcores = 0;

  bool operator==(const ResourceProfile&) const = default;

  ResourceProfile& operator+=(const ResourceProfile& o) {
    memory_mb += o.memory_mb;
    vcores += o.vcores;
    return *this;
  }
  ResourceProfile& operator-=(const ResourceProfile& o) {
    memory_mb -= o.memory_mb;
    vcores -= o.vcores;
    return *this;
  }

  friend ResourceProfile operator+(ResourceProfile a, const ResourceProfile& b) { return a += b; }
  friend ResourceProfile operator-(ResourceProfile a, const ResourceProfile& b) { return a -= b; }

  /// True when this fits inside `room` in both dimensions.
  bool fits_in(const ResourceProfile& room) const {
    return memory_mb <= room.memory_mb && vcores <= room.vcores;
  }

  bool is_null() const { return memory_mb == 0 && vcores == 0; }
};

}  // namespace ephemyarn
