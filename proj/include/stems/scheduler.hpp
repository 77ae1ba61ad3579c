#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stems/intramap.hpp"
#include "stems/tilegraph.hpp"

namespace stems::scheduler {

enum class TensorKind : uint8_t { Feature = 0, Weight, State, Input };

struct TensorId {
    int op = -1;
    int32_t s = -1;   // spatial slice (-1 for weights)
    int32_t t = -1;   // temporal slice (-1 for weights and state stripes)
    TensorKind kind = TensorKind::Feature;
    auto operator<=>(const TensorId&) const = default;
};

std::string to_string(const TensorId& id);

struct TensorInstance {
    TensorId id;
    Bits size = 0;
    int priority = 0;        // remaining future consumer tiles
    int home_core = -1;      // producing core
    bool in_gb = false;
    bool has_dram_copy = false;
};

struct ExecRecord {
    int tile = -1;
    int core = 0;
    Cycles start = 0, end = 0;
};

struct XferRecord {
    TensorId tensor;
    int core = 0;          // destination (fetch) or source (writeback)
    bool writeback = false;
    Bits bits = 0;
    Cycles start = 0, end = 0;
};

struct EnergyBreakdown {
    std::array<std::array<EnergyFj, kNumOperandGroups>, accel::kNumComponents> cells{};
    EnergyFj total = 0;

    void add(accel::Component c, OperandGroup g, EnergyFj e) {
        cells[size_t(c)][size_t(g)] += e;
        total += e;
    }
    void merge(const intramap::MappingCost& mc);
    EnergyFj sum_cells() const;
    std::string to_csv() const;
};

struct ScheduleResult {
    std::vector<ExecRecord> exec_trace;
    std::vector<XferRecord> xfer_trace;
    EnergyBreakdown energy;
    Cycles latency = 0;
    Bits dram_bits = 0;                           // total off-chip traffic
    std::array<Bits, kNumOperandGroups> dram_bits_by_group{};
    // capacity watermark checks (max resident bits per core GB)
    std::vector<Bits> gb_peak;
    std::vector<int> order;  // tile execution order (tile indices)

    std::string summary() const;
};

struct ScheduleOptions {
    bool prefetch = true;  // overlap next tile's transfers with compute
};

// Deterministic execution order: fused blocks iterate temporal slice, then
// band, then layer depth; LBL blocks run layer-major. Returns a linear
// extension of all tile-graph edges.
std::vector<int> scheduling_order(const tilegraph::TileGraph& tg);

// Eviction ranking: ascending priority, then descending size, then id.
std::vector<const TensorInstance*> evict_rank(
    std::vector<const TensorInstance*> candidates);

// Executes the tile graph on the accelerator, managing scratchpad space and
// DRAM/NoC transfers, and aggregating energy and latency.
ScheduleResult schedule(const tilegraph::TileGraph& tg,
                        const accel::AcceleratorModel& acc,
                        intramap::Mapper& mapper,
                        const std::map<int, int>& op_to_core = {},
                        const ScheduleOptions& opts = {});

}  // namespace stems::scheduler
