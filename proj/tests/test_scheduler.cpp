#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "ephemyarn/config.hpp"
#include "ephemyarn/errors.hpp"
#include "ephemyarn/scheduler.hpp"

using namespace ephemyarn;

TEST_CASE("normalize rounds memory up to the allocation grid") {
  Config cfg;  // min 2048 MB / 1 vcore, capacity 53248 MB / 16 vcores
  CHECK(normalize_request({1, 1}, cfg).memory_mb == 2048);
  CHECK(normalize_request({2048, 1}, cfg).memory_mb == 2048);
  CHECK(normalize_request({2049, 1}, cfg).memory_mb == 4096);
  CHECK(normalize_request({4096, 1}, cfg).memory_mb == 4096);
  CHECK(normalize_request({0, 1}, cfg).memory_mb == 2048);
  CHECK(normalize_request({53248, 1}, cfg).memory_mb == 53248);
}

TEST_CASE("normalize raises vcores to the minimum") {
  Config cfg;
  cfg.min_alloc_vcores = 2;
  CHECK(normalize_request({100, 0}, cfg).vcores == 2);
  CHECK(normalize_request({100, 1}, cfg).vcores == 2);
  CHECK(normalize_request({100, 5}, cfg).vcores == 5);
}

TEST_CASE("normalize rejects requests no node can ever satisfy") {
  Config cfg;
  CHECK_THROWS_AS(normalize_request({53249, 1}, cfg), Error);
  CHECK_THROWS_AS(normalize_request({1024, 17}, cfg), Error);
  try {
    normalize_request({60000, 1}, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Unsatisfiable);
  }
}

TEST_CASE("first fit walks nodes in registration order") {
  std::vector<ScheduleNode> nodes = {
      {"n0", {4096, 4}, {}}, {"n1", {4096, 4}, {}}, {"n2", {4096, 4}, {}}};
  std::vector<ScheduleRequest> queue = {{"app-1", {2048, 1}, 3}};
  auto placements = schedule_step(queue, nodes);
  REQUIRE(placements.size() == 3);
  CHECK(placements[0].host == "n0");
  CHECK(placements[1].host == "n0");
  CHECK(placements[2].host == "n1");
  CHECK(queue[0].count == 0);
  CHECK(nodes[0].used.memory_mb == 4096);
  CHECK(nodes[1].used.memory_mb == 2048);
  CHECK(nodes[2].used.memory_mb == 0);
}

TEST_CASE("vcores constrain placement independently of memory") {
  std::vector<ScheduleNode> nodes = {{"n0", {8192, 2}, {}}};
  std::vector<ScheduleRequest> queue = {{"app-1", {1024, 1}, 4}};
  auto placements = schedule_step(queue, nodes);
  CHECK(placements.size() == 2);
  CHECK(queue[0].count == 2);
  CHECK(nodes[0].used.vcores == 2);
}

TEST_CASE("an unplaceable head blocks everything behind it") {
  std::vector<ScheduleNode> nodes = {{"n0", {4096, 4}, {2048, 1}}};
  std::vector<ScheduleRequest> queue = {
      {"app-1", {4096, 1}, 1},   // does not fit in the 2048 MB left
      {"app-2", {2048, 1}, 1}};  // would fit, must wait
  auto placements = schedule_step(queue, nodes);
  CHECK(placements.empty());
  CHECK(queue[0].count == 1);
  CHECK(queue[1].count == 1);
  CHECK(nodes[0].used.memory_mb == 2048);
}

TEST_CASE("a partially placed head still blocks the tail") {
  std::vector<ScheduleNode> nodes = {{"n0", {4096, 16}, {}}};
  std::vector<ScheduleRequest> queue = {{"app-1", {2048, 1}, 3},
                                        {"app-2", {2048, 1}, 1}};
  auto placements = schedule_step(queue, nodes);
  REQUIRE(placements.size() == 2);
  CHECK(placements[0].app_id == "app-1");
  CHECK(placements[1].app_id == "app-1");
  CHECK(queue[0].count == 1);
  CHECK(queue[1].count == 1);
}

TEST_CASE("later requests drain once the head completes") {
  std::vector<ScheduleNode> nodes = {{"n0", {4096, 16}, {}}};
  std::vector<ScheduleRequest> queue = {{"app-1", {2048, 1}, 1},
                                        {"app-2", {2048, 1}, 1},
                                        {"app-3", {2048, 1}, 1}};
  auto placements = schedule_step(queue, nodes);
  REQUIRE(placements.size() == 2);
  CHECK(placements[0].app_id == "app-1");
  CHECK(placements[1].app_id == "app-2");
  CHECK(queue[2].count == 1);
}

namespace {

// Reference first-fit written the long way: one container per loop pass,
// scanning from the queue head each time.
struct RefPlacement {
  std::string app;
  size_t node = 0;
  ResourceProfile prof;
};

std::vector<RefPlacement> reference_first_fit(std::vector<ScheduleRequest> queue,
                                              std::vector<ScheduleNode> nodes) {
  std::vector<RefPlacement> out;
  size_t qi = 0;
  while (qi < queue.size()) {
    if (queue[qi].count == 0) {
      ++qi;
      continue;
    }
    bool placed = false;
    for (size_t ni = 0; ni < nodes.size() && !placed; ++ni) {
      std::int64_t free_mb = nodes[ni].capacity.memory_mb - nodes[ni].used.memory_mb;
      std::int64_t free_vc = nodes[ni].capacity.vcores - nodes[ni].used.vcores;
      if (queue[qi].profile.memory_mb <= free_mb && queue[qi].profile.vcores <= free_vc) {
        nodes[ni].used.memory_mb += queue[qi].profile.memory_mb;
        nodes[ni].used.vcores += queue[qi].profile.vcores;
        out.push_back({queue[qi].app_id, ni, queue[qi].profile});
        --queue[qi].count;
        placed = true;
      }
    }
    if (!placed) break;
  }
  return out;
}

struct RandomInstance {
  Config cfg;
  std::vector<ScheduleNode> nodes;
  std::vector<ScheduleRequest> queue;
};

RandomInstance make_instance(std::mt19937_64& rng, int max_nodes, int max_requests) {
  RandomInstance inst;
  std::uniform_int_distribution<std::int64_t> min_pick(0, 5);
  static const std::int64_t kMins[] = {64, 128, 256, 512, 1024, 2048};
  inst.cfg.min_alloc_mb = kMins[min_pick(rng)];
  inst.cfg.min_alloc_vcores = 1 + static_cast<std::int64_t>(rng() % 2);
  inst.cfg.node_capacity.memory_mb =
      inst.cfg.min_alloc_mb * (1 + static_cast<std::int64_t>(rng() % 24));
  inst.cfg.node_capacity.vcores =
      std::max<std::int64_t>(inst.cfg.min_alloc_vcores, 1 + static_cast<std::int64_t>(rng() % 16));

  int node_count = 1 + static_cast<int>(rng() % max_nodes);
  for (int i = 0; i < node_count; ++i) {
    inst.nodes.push_back({"node" + std::to_string(i), inst.cfg.node_capacity, {}});
  }

  int req_count = 1 + static_cast<int>(rng() % max_requests);
  for (int i = 0; i < req_count; ++i) {
    ResourceProfile raw{
        1 + static_cast<std::int64_t>(rng() % (inst.cfg.node_capacity.memory_mb + 512)),
        static_cast<std::int64_t>(rng() % (inst.cfg.node_capacity.vcores + 2))};
    try {
      ResourceProfile prof = normalize_request(raw, inst.cfg);
      inst.queue.push_back({"app-" + std::to_string(i), prof,
                            1 + static_cast<std::int64_t>(rng() % 5)});
    } catch (const Error&) {
      // oversized ask, rejected before it reaches the queue
    }
  }
  if (inst.queue.empty()) {
    inst.queue.push_back({"app-0", {inst.cfg.min_alloc_mb, inst.cfg.min_alloc_vcores}, 1});
  }
  return inst;
}

}  // namespace

TEST_CASE("randomized sequences never violate the scheduling invariants") {
  std::mt19937_64 rng(20240811);
  const int kIterations = 10000;
  for (int iter = 0; iter < kIterations; ++iter) {
    RandomInstance inst = make_instance(rng, 8, 12);

    // Live containers per node so completions can release exactly what was
    // placed, across several scheduling rounds.
    std::vector<std::vector<ResourceProfile>> live(inst.nodes.size());
    int rounds = 1 + static_cast<int>(rng() % 4);
    for (int round = 0; round < rounds; ++round) {
      auto queue_before = inst.queue;
      auto nodes_before = inst.nodes;

      auto placements = schedule_step(inst.queue, inst.nodes);

      // Replay determinism.
      auto queue_replay = queue_before;
      auto nodes_replay = nodes_before;
      auto placements2 = schedule_step(queue_replay, nodes_replay);
      REQUIRE(placements2.size() == placements.size());
      for (size_t i = 0; i < placements.size(); ++i) {
        REQUIRE(placements[i].request_index == placements2[i].request_index);
        REQUIRE(placements[i].node_index == placements2[i].node_index);
        REQUIRE(placements[i].app_id == placements2[i].app_id);
        REQUIRE(placements[i].profile.memory_mb == placements2[i].profile.memory_mb);
        REQUIRE(placements[i].profile.vcores == placements2[i].profile.vcores);
      }
      for (size_t i = 0; i < inst.queue.size(); ++i) {
        REQUIRE(inst.queue[i].count == queue_replay[i].count);
      }

      // Grid alignment and capacity in both dimensions.
      for (const auto& p : placements) {
        REQUIRE(p.profile.memory_mb % inst.cfg.min_alloc_mb == 0);
        REQUIRE(p.profile.memory_mb > 0);
        REQUIRE(p.profile.vcores >= inst.cfg.min_alloc_vcores);
        live[p.node_index].push_back(p.profile);
      }
      for (const auto& n : inst.nodes) {
        REQUIRE(n.used.memory_mb >= 0);
        REQUIRE(n.used.vcores >= 0);
        REQUIRE(n.used.memory_mb <= n.capacity.memory_mb);
        REQUIRE(n.used.vcores <= n.capacity.vcores);
      }

      // FIFO head-of-line: placements stay in queue order and nothing is
      // placed past the first unfinished request.
      size_t first_unfinished = inst.queue.size();
      for (size_t i = 0; i < inst.queue.size(); ++i) {
        if (inst.queue[i].count > 0) {
          first_unfinished = i;
          break;
        }
      }
      size_t prev_index = 0;
      for (const auto& p : placements) {
        REQUIRE(p.request_index >= prev_index);
        prev_index = p.request_index;
        REQUIRE(p.request_index <= first_unfinished);
      }

      // Node usage delta must equal the sum of this round's placements.
      for (size_t ni = 0; ni < inst.nodes.size(); ++ni) {
        ResourceProfile delta{};
        for (const auto& p : placements) {
          if (p.node_index == ni) delta += p.profile;
        }
        REQUIRE(inst.nodes[ni].used.memory_mb ==
                nodes_before[ni].used.memory_mb + delta.memory_mb);
        REQUIRE(inst.nodes[ni].used.vcores == nodes_before[ni].used.vcores + delta.vcores);
      }

      // Drop the fully placed prefix, then release a random set of live
      // containers to open room for the next round.
      while (!inst.queue.empty() && inst.queue.front().count == 0) {
        inst.queue.erase(inst.queue.begin());
      }
      for (size_t ni = 0; ni < live.size(); ++ni) {
        auto& running = live[ni];
        for (size_t c = 0; c < running.size();) {
          if (rng() % 2 == 0) {
            inst.nodes[ni].used -= running[c];
            running.erase(running.begin() + static_cast<std::ptrdiff_t>(c));
          } else {
            ++c;
          }
        }
        REQUIRE(inst.nodes[ni].used.memory_mb >= 0);
        REQUIRE(inst.nodes[ni].used.vcores >= 0);
      }
    }
  }
}

TEST_CASE("small instances match an independent first-fit reference") {
  std::mt19937_64 rng(771155);
  for (int iter = 0; iter < 3000; ++iter) {
    RandomInstance inst = make_instance(rng, 3, 10);
    auto queue_copy = inst.queue;
    auto nodes_copy = inst.nodes;

    auto got = schedule_step(inst.queue, inst.nodes);
    auto want = reference_first_fit(queue_copy, nodes_copy);

    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i].app_id == want[i].app);
      REQUIRE(got[i].node_index == want[i].node);
      REQUIRE(got[i].profile.memory_mb == want[i].prof.memory_mb);
      REQUIRE(got[i].profile.vcores == want[i].prof.vcores);
    }
  }
}
