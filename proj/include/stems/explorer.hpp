#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stems/scheduler.hpp"

namespace stems::explorer {

struct BlockRanking {
    std::vector<int> fusion_order;   // always input side first
    std::vector<int> batch_order;    // input or output side
    bool batch_from_output = false;
};

// Fusion proceeds from the input side; batching starts from the output side
// when the first block is stateless (hybrid models), from the input side
// otherwise. The direction is overridable.
BlockRanking rank_blocks(const workload::WorkloadGraph& w,
                         std::optional<bool> batch_from_output = std::nullopt);

struct PointSummary {
    EnergyFj dram_energy = 0;
    EnergyFj total_energy = 0;
    Cycles latency = 0;
    Bits dram_bits = 0;
    bool feasible = false;
};

struct HybridPoint {
    int n_fused = 0;
    int n_batched = 0;
    tilegraph::CutSpec cuts;
    PointSummary summary;
};

struct GridResult {
    int n_blocks = 0;
    BlockRanking ranking;
    std::vector<HybridPoint> points;  // (N+1)^2, row-major over n_fused

    const HybridPoint& at(int f, int b) const;
    const HybridPoint& best() const;  // min DRAM energy among feasible
    std::string heatmap_csv(int what) const;  // 0 dram mJ, 1 total mJ, 2 latency
};

// Derives the CutSpec for grid point (f, b): first f blocks of fusion_order
// get per-row bands, first b blocks of batch_order get temporal_cut = T.
tilegraph::CutSpec cuts_for_point(const workload::WorkloadGraph& w,
                                  const BlockRanking& ranking, int f, int b);

GridResult hybrid_grid_explore(const workload::WorkloadGraph& w,
                               const accel::AcceleratorModel& acc,
                               std::optional<bool> batch_from_output = std::nullopt,
                               int jobs = 1);

struct SweepRow {
    int64_t factor = 0;
    Bits dram_bits = 0;
    std::array<Bits, kNumOperandGroups> dram_bits_by_group{};
    EnergyFj dram_energy = 0;
    EnergyFj total_energy = 0;
};

// Uniform time batching (LBL spatially) across the given factors.
std::vector<SweepRow> time_batch_sweep(const workload::WorkloadGraph& w,
                                       const accel::AcceleratorModel& acc,
                                       const std::vector<int64_t>& factors);

struct GaConfig {
    int population = 32;
    int generations = 50;
    uint64_t seed = 1;
    double mutation_rate = 0;  // 0 -> 1/num_layers
};

struct GaResult {
    std::map<int, int> allocation;  // op id -> core id
    PointSummary summary;
    double fitness = 0;
};

// Seeded generational GA over layer-to-core allocations (tournament
// selection, single-point crossover, per-gene mutation). Deterministic for a
// fixed seed. Identity allocation for single-core models.
GaResult ga_allocate(const workload::WorkloadGraph& w,
                     const accel::AcceleratorModel& acc,
                     const tilegraph::CutSpec& cuts, const GaConfig& cfg);

}  // namespace stems::explorer
