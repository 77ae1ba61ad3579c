#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stems/intramap.hpp"
#include "stems/scheduler.hpp"

namespace stems::oracle {

// Event-level counters mirroring intramap::AccessCounts plus schedule-level
// DRAM traffic.
struct SimCounters {
    intramap::AccessCounts counts;
    uint64_t macs = 0;
    uint64_t sops = 0;
    Bits dram_bits = 0;
    std::array<Bits, kNumOperandGroups> dram_bits_by_group{};
};

// Walks the loop nest element-group by element-group, maintaining per-level
// resident regions and accumulator slot occupancy, counting every transfer.
// Ground truth for intramap::access_counts.
SimCounters simulate_nest(const intramap::LoopNest& nest,
                          const intramap::TileShape& shape);

struct ScheduleCheck {
    bool ok = false;
    std::string error;          // first mismatch / violation
    SimCounters counters;
    uint64_t tiles_walked = 0;  // tiles validated with element-level walks
};

// Replays a schedule trace: independently recomputes tensor lifetimes,
// evictions and transfers from the execution order, re-walks each tile's
// nest (up to max_walk_ops per tile) and compares against the
// ScheduleResult totals.
ScheduleCheck simulate_schedule(const tilegraph::TileGraph& tg,
                                const accel::AcceleratorModel& acc,
                                intramap::Mapper& mapper,
                                const scheduler::ScheduleResult& trace,
                                uint64_t max_walk_ops = 1u << 22);

// Functional SNN execution in the given tile order with seeded random spike
// inputs; true iff outputs are bit-identical to naive t-major execution.
bool functional_check(const tilegraph::TileGraph& tg,
                      const std::vector<int>& order, uint64_t seed = 1);

}  // namespace stems::oracle
