#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "stems/accelerator.hpp"
#include "stems/tilegraph.hpp"
#include "stems/workload.hpp"

namespace stems::intramap {

std::vector<int64_t> prime_factorize(int64_t n);

// Memory boundaries crossed by tile-local data movement. DramGb appears only
// for operands streamed from DRAM (tile does not fit the core).
enum class Boundary : uint8_t { DramGb = 0, GbInBuf, GbWtBuf, GbAcc, InBufPe, WtBufPe };
constexpr int kNumBoundaries = 6;
const char* to_string(Boundary b);

enum class Dir : uint8_t { Toward = 0, Away };  // toward PE / away from PE

// Dense per-(boundary, operand kind, direction) bit counters.
struct AccessCounts {
    std::array<std::array<std::array<Bits, 2>, 5>, kNumBoundaries> bits{};

    Bits& at(Boundary b, OperandKind k, Dir d) {
        return bits[size_t(b)][size_t(k)][size_t(d)];
    }
    Bits get(Boundary b, OperandKind k, Dir d) const {
        return bits[size_t(b)][size_t(k)][size_t(d)];
    }
    bool operator==(const AccessCounts&) const = default;
    AccessCounts& operator+=(const AccessCounts& o);
    std::string diff_string(const AccessCounts& o) const;
};

struct Loop {
    Axis axis;
    int64_t bound;
    auto operator<=>(const Loop&) const = default;
};

// Where stored neuron state is parked between accumulator occupancies.
enum class StateHome : uint8_t { None = 0, GlobalBuf, DramStream };

// A concrete temporal mapping of one tile onto one core.
//
// loops run innermost-first. The PE array unrolls u_k output channels and
// u_oy x u_ox output spatial positions below all temporal loops. Residency
// depths give the number of innermost loops whose footprint is held in the
// local input/weight buffers; refills stream from the level above.
struct LoopNest {
    std::vector<Loop> loops;
    int64_t u_k = 1, u_oy = 1, u_ox = 1;
    int in_depth = 0;   // input working set = loops below this depth
    int wt_depth = 0;
    StateHome state_home = StateHome::None;
    bool output_to_dram = false;    // stream outputs through GB to DRAM
    bool weights_from_dram = false; // weight tensor not resident in GB
    bool inputs_from_dram = false;  // input tensors not resident in GB

    int64_t unrolled() const { return u_k * u_oy * u_ox; }
    std::string to_string() const;
    bool operator==(const LoopNest&) const = default;
};

struct AllocationPlan {
    Bits in_buf = 0;      // input working set(s)
    Bits wt_buf = 0;      // weight working set
    Bits gb = 0;          // tensors + state stripe resident during the tile
    bool operator==(const AllocationPlan&) const = default;
};

struct MappingCost {
    EnergyFj energy = 0;
    // component x operand-group breakdown; sums exactly to energy
    std::array<std::array<EnergyFj, kNumOperandGroups>, accel::kNumComponents> breakdown{};
    Cycles latency = 0;
    Cycles compute_cycles = 0;
    bool memory_bound = false;
    AccessCounts counts;
    LoopNest nest;
    AllocationPlan alloc;
    bool valid = false;

    bool needs_dram() const {
        return nest.output_to_dram || nest.weights_from_dram ||
               nest.inputs_from_dram || nest.state_home == StateHome::DramStream;
    }
    EnergyFj& bd(accel::Component c, OperandGroup g) {
        return breakdown[size_t(c)][size_t(g)];
    }
};

// Shape-level description of a tile, independent of its position in the
// graph except for the inference-boundary flags (first/last temporal slice),
// which change state initialization/discard accounting.
struct TileShape {
    workload::OpClass op_class;
    int64_t t = 1, k = 1, c = 1, oy = 1, ox = 1, fy = 1, fx = 1;
    int stride_y = 1, stride_x = 1;
    bool stateful = false;
    bool sop = true;
    int in_precision = workload::kValueBits;
    int out_precision = workload::kValueBits;
    int num_input_operands = 1;
    bool first_t = true;  // tile starts at timestep 0
    bool last_t = true;   // tile ends at the final inference timestep
    Bits in_tensor_bits = 0;   // clamped receptive region (GB tensor reservation)

    auto operator<=>(const TileShape&) const = default;

    int64_t dim(Axis a) const;
    uint64_t op_count() const;
    Bits weight_tensor_bits() const;
    Bits out_tensor_bits() const;
    Bits state_stripe_bits() const;
};

TileShape tile_shape(const workload::WorkloadGraph& w,
                     const tilegraph::ComputationTile& tile);

// Per-(boundary, operand, direction) bit counts for one nest. This is the
// analytical counterpart of oracle::simulate_nest and must agree with it
// exactly.
AccessCounts access_counts(const LoopNest& nest, const TileShape& shape);

MappingCost estimate_cost(const LoopNest& nest, const TileShape& shape,
                          const accel::Core& core,
                          const accel::MemoryLevel& dram);

// Yields all valid (nest, allocation) candidates for the tile under the
// documented pruning rules. allow_dram enables DRAM-streamed variants.
void enumerate_mappings(const TileShape& shape, const accel::Core& core,
                        bool allow_dram,
                        const std::function<void(const LoopNest&)>& yield);

struct SearchStats {
    uint64_t enumerated = 0;
    uint64_t cache_hits = 0;
    uint64_t cache_misses = 0;
};

// Memoizing minimum-energy search per unique (tile shape, core). Thread-safe;
// results deterministic regardless of evaluation order.
class Mapper {
public:
    Mapper(const accel::AcceleratorModel& acc) : acc_(&acc) {}

    // Best mapping with all tensors core-resident; falls back to DRAM-backed
    // search when the tile cannot fit on the core alone.
    const MappingCost& best_mapping(const TileShape& shape, int core_id);
    // Best mapping with DRAM appended (oversized-tile path).
    const MappingCost& best_mapping_dram(const TileShape& shape, int core_id);

    SearchStats stats() const;

private:
    struct Key;
    const MappingCost& search(const TileShape& shape, int core_id, bool dram);

    const accel::AcceleratorModel* acc_;
    mutable std::mutex mu_;
    std::map<std::tuple<TileShape, int, bool>, MappingCost> cache_;
    SearchStats stats_;
};

}  // namespace stems::intramap
