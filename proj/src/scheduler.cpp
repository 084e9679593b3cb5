#include "ephemyarn/scheduler.hpp"

#include "ephemyarn/errors.hpp"

namespace ephemyarn {

ResourceProfile normalize_request(const ResourceProfile& requested, const Config& cfg) {
  ResourceProfile out;
  std::int64_t units = (requested.memory_mb + cfg.min_alloc_mb - 1) / cfg.min_alloc_mb;
  if (units < 1) units = 1;
  out.memory_mb = units * cfg.min_alloc_mb;
  out.vcores = std::max(requested.vcores, cfg.min_alloc_vcores);
  if (out.memory_mb > cfg.node_capacity.memory_mb) {
    throw Error(ErrorCode::Unsatisfiable,
                std::to_string(out.memory_mb) + " MB exceeds node capacity " +
                    std::to_string(cfg.node_capacity.memory_mb) + " MB");
  }
  if (out.vcores > cfg.node_capacity.vcores) {
    throw Error(ErrorCode::Unsatisfiable,
                std::to_string(out.vcores) + " vcores exceed node capacity " +
                    std::to_string(cfg.node_capacity.vcores));
  }
  return out;
}

std::vector<Placement> schedule_step(std::vector<ScheduleRequest>& queue,
                                     std::vector<ScheduleNode>& nodes) {
  std::vector<Placement> placements;
  for (size_t qi = 0; qi < queue.size(); ++qi) {
    ScheduleRequest& req = queue[qi];
    while (req.count > 0) {
      bool placed = false;
      for (size_t ni = 0; ni < nodes.size(); ++ni) {
        if (req.profile.fits_in(nodes[ni].free())) {
          nodes[ni].used += req.profile;
          placements.push_back({qi, ni, req.app_id, nodes[ni].host, req.profile});
          --req.count;
          placed = true;
          break;
        }
      }
      if (!placed) break;
    }
    // Head-of-line: an unfinished request blocks everything behind it.
    if (req.count > 0) break;
  }
  return placements;
}

}  // namespace ephemyarn
