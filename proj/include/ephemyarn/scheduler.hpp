#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ephemyarn/config.hpp"
#include "ephemyarn/resources.hpp"

namespace ephemyarn {

/// Rounds a request onto the allocation grid: memory up to the nearest
/// positive multiple of cfg.min_alloc_mb, vcores to at least
/// cfg.min_alloc_vcores. Throws Error(Unsatisfiable) when the normalized
/// profile can never fit a node of cfg.node_capacity.
ResourceProfile normalize_request(const ResourceProfile& requested, const Config& cfg);

/// One node as the scheduler sees it. `used` covers every live container
/// (allocated through running).
struct ScheduleNode {
  std::string host;
  ResourceProfile capacity;
  ResourceProfile used;

  ResourceProfile free() const { return capacity - used; }
};

/// One FIFO queue entry: `count` containers of an already-normalized
/// profile for one application.
struct ScheduleRequest {
  std::string app_id;
  ResourceProfile profile;
  std::int64_t count = 0;
};

struct Placement {
  size_t request_index = 0;  // position in the queue at call time
  size_t node_index = 0;
  std::string app_id;
  std::string host;
  ResourceProfile profile;
};

/// One scheduling pass: strict FIFO with first-fit.
///
/// Walks the queue from the head. For the current request, each container
/// is placed on the first node (in registration order) with room in both
/// dimensions; a request that cannot be fully placed blocks the queue —
/// later requests never skip ahead. Mutates `nodes[i].used` and
/// `queue[i].count`; callers pop fully placed head entries afterwards.
///
/// Deterministic: identical inputs produce identical placements.
std::vector<Placement> schedule_step(std::vector<ScheduleRequest>& queue,
                                     std::vector<ScheduleNode>& nodes);

}  // namespace ephemyarn
