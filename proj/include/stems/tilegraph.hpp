#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stems/workload.hpp"

namespace stems::tilegraph {

// Per-block partitioning: spatial_cut = number of OY row bands (1 = no
// fusion), temporal_cut = timesteps per batch (T = full time batching).
struct BlockCut {
    int64_t spatial_cut = 1;
    int64_t temporal_cut = 1;
};

struct CutSpec {
    std::map<int, BlockCut> blocks;  // defaults applied for missing blocks
    BlockCut for_block(int block_id) const;
};

CutSpec parse_cuts(const std::string& text);

struct RowRange {
    int64_t lo = 0, hi = 0;  // half-open
    int64_t size() const { return hi - lo; }
    bool empty() const { return hi <= lo; }
};

// Minimal input rows feeding out_rows through op's OY projection, clamped to
// the input extent.
RowRange receptive_field(const workload::OperatorNode& op, RowRange out_rows);

struct TileId {
    int op = -1;
    int32_t s = 0;   // spatial slice index
    int32_t t = 0;   // temporal slice index
    auto operator<=>(const TileId&) const = default;
};

std::string to_string(const TileId& id);

struct ComputationTile {
    TileId id;
    RowRange out_rows;   // full OX/K implied
    RowRange t_range;    // half-open timestep range
    uint64_t op_count = 0;   // MACs or SOPs
    bool sop = true;         // SOP-priced (spiking inputs) vs MAC
    // Operand footprints in bits, as touched by this tile.
    Bits input_bits = 0;     // receptive region(s), clamped
    Bits weight_bits = 0;    // full operator weights
    Bits output_bits = 0;
    Bits state_bits = 0;     // stored state stripe (0 if stateless)
};

enum class EdgeKind : uint8_t { Data = 0, State, Order };

struct TileEdge {
    int from = -1;  // tile index
    int to = -1;
    EdgeKind kind = EdgeKind::Data;
    Bits bits = 0;  // transferred region size (Data edges)
};

struct TileGraph {
    const workload::WorkloadGraph* graph = nullptr;
    CutSpec cuts;
    std::vector<ComputationTile> tiles;
    std::vector<TileEdge> edges;
    // tiles index lookup: per op, tiles ordered (t, s)
    std::vector<std::vector<int>> tiles_of_op;
    // effective per-op cut after clamping
    std::vector<BlockCut> op_cuts;

    int tile_index(const TileId& id) const;
    const ComputationTile& tile(const TileId& id) const;
    std::vector<std::vector<int>> predecessors() const;
};

// Partitions every operator into row-band x timestep-range tiles and derives
// data (receptive field), state (temporal chains) and order edges.
TileGraph generate_tile_graph(const workload::WorkloadGraph& w, const CutSpec& cuts);

}  // namespace stems::tilegraph
