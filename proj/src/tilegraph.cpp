#include "stems/tilegraph.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

namespace stems::tilegraph {

using workload::OperatorNode;
using workload::WorkloadGraph;

BlockCut CutSpec::for_block(int block_id) const {
    auto it = blocks.find(block_id);
    return it == blocks.end() ? BlockCut{} : it->second;
}

CutSpec parse_cuts(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("cuts document is not valid JSON: ") + e.what());
    }
    CutSpec cuts;
    for (const auto& jb : doc.at("blocks")) {
        int b = jb.at("block").get<int>();
        BlockCut c;
        c.spatial_cut = jb.value("fuse", 1);
        c.temporal_cut = jb.value("tbatch", 1);
        cuts.blocks[b] = c;
    }
    return cuts;
}

std::string to_string(const TileId& id) {
    std::ostringstream os;
    os << "ct(" << id.op << "," << id.s << "," << id.t << ")";
    return os.str();
}

RowRange receptive_field(const OperatorNode& op, RowRange out_rows) {
    const auto& p = op.projection;
    int64_t lo = out_rows.lo * p.stride_y - p.pad_y;
    int64_t hi = (out_rows.hi - 1) * p.stride_y - p.pad_y + p.kernel_y;
    lo = std::max<int64_t>(lo, 0);
    hi = std::min<int64_t>(hi, op.in_y);
    if (hi < lo) hi = lo;
    return {lo, hi};
}

int TileGraph::tile_index(const TileId& id) const {
    for (int i : tiles_of_op[id.op])
        if (tiles[i].id == id) return i;
    throw ModelError("unknown tile " + to_string(id));
}

const ComputationTile& TileGraph::tile(const TileId& id) const {
    return tiles[tile_index(id)];
}

std::vector<std::vector<int>> TileGraph::predecessors() const {
    std::vector<std::vector<int>> preds(tiles.size());
    for (const auto& e : edges) preds[e.to].push_back(e.from);
    return preds;
}

namespace {

std::vector<RowRange> split_rows(int64_t extent, int64_t n_slices) {
    n_slices = std::min(n_slices, extent);
    std::vector<RowRange> out;
    int64_t base = extent / n_slices;
    int64_t lo = 0;
    for (int64_t i = 0; i < n_slices; ++i) {
        // last slice absorbs the remainder
        int64_t hi = (i == n_slices - 1) ? extent : lo + base;
        out.push_back({lo, hi});
        lo = hi;
    }
    return out;
}

std::vector<RowRange> split_time(int64_t total, int64_t batch) {
    batch = std::min(batch, total);
    std::vector<RowRange> out;
    for (int64_t lo = 0; lo < total; lo += batch)
        out.push_back({lo, std::min(lo + batch, total)});
    return out;
}

}  // namespace

TileGraph generate_tile_graph(const WorkloadGraph& w, const CutSpec& cuts) {
    TileGraph tg;
    tg.graph = &w;
    tg.cuts = cuts;
    int n_ops = int(w.nodes.size());
    tg.tiles_of_op.assign(n_ops, {});
    tg.op_cuts.assign(n_ops, BlockCut{});

    std::map<int, int> op_index;  // node id -> dense index
    for (int i = 0; i < n_ops; ++i) op_index[w.nodes[i].id] = i;

    // Tiles. Node ids are remapped to dense indices for tile addressing.
    for (int oi = 0; oi < n_ops; ++oi) {
        const OperatorNode& op = w.nodes[oi];
        BlockCut cut = cuts.for_block(op.block_id);
        if (cut.spatial_cut < 1 || cut.temporal_cut < 1)
            throw ModelError("block " + std::to_string(op.block_id) +
                             ": cuts must be >= 1 (zero-size slice)");
        cut.spatial_cut = std::min(cut.spatial_cut, op.out_y);
        cut.temporal_cut = std::min(cut.temporal_cut, w.total_timesteps);
        tg.op_cuts[oi] = cut;

        auto bands = split_rows(op.out_y, cut.spatial_cut);
        auto slices = split_time(w.total_timesteps, cut.temporal_cut);

        for (int32_t ti = 0; ti < int32_t(slices.size()); ++ti) {
            for (int32_t si = 0; si < int32_t(bands.size()); ++si) {
                ComputationTile t;
                t.id = {oi, si, ti};
                t.out_rows = bands[si];
                t.t_range = slices[ti];
                int64_t outs = op.out_channels * t.out_rows.size() * op.out_x *
                               t.t_range.size();
                int64_t red = 1;
                if (op.has_weights()) {
                    red = op.in_channels * op.projection.kernel_y *
                          op.projection.kernel_x;
                } else if (op.op_class == workload::OpClass::MaxPool) {
                    red = op.projection.kernel_y * op.projection.kernel_x;
                }
                t.op_count = op.is_source() ? 0 : uint64_t(outs) * uint64_t(red);
                // SOP iff every input feature is a spike train
                t.sop = true;
                for (const auto& o : op.operands)
                    if (o.kind == OperandKind::InputFeature &&
                        o.precision != workload::kSpikeBits)
                        t.sop = false;
                t.output_bits = Bits(outs) * op.out_precision;
                t.weight_bits = Bits(op.weight_count()) * workload::kWeightBits;
                if (op.stateful)
                    t.state_bits = Bits(op.out_channels) * t.out_rows.size() *
                                   op.out_x * workload::kStateBits;
                // input_bits is filled from producer tensors once edges exist
                tg.tiles_of_op[oi].push_back(int(tg.tiles.size()));
                tg.tiles.push_back(t);
            }
        }
    }

    // Edges.
    auto find_tiles = [&](int oi) -> const std::vector<int>& {
        return tg.tiles_of_op[oi];
    };

    for (int oi = 0; oi < n_ops; ++oi) {
        const OperatorNode& op = w.nodes[oi];
        const auto& my_tiles = find_tiles(oi);
        int n_bands = int(split_rows(op.out_y, tg.op_cuts[oi].spatial_cut).size());

        // order edges: lexicographic (t, s) chain within the operator
        for (size_t i = 1; i < my_tiles.size(); ++i)
            tg.edges.push_back({my_tiles[i - 1], my_tiles[i], EdgeKind::Order, 0});

        // state edges: temporal chains per band
        if (op.stateful) {
            for (int s = 0; s < n_bands; ++s) {
                int prev = -1;
                for (int idx : my_tiles) {
                    if (tg.tiles[idx].id.s != s) continue;
                    if (prev >= 0)
                        tg.edges.push_back({prev, idx, EdgeKind::State,
                                            tg.tiles[idx].state_bits});
                    prev = idx;
                }
            }
        }

        // data edges via receptive-field back-projection
        for (int pid : op.inputs) {
            int pi = op_index.at(pid);
            const OperatorNode& prod = w.nodes[pi];
            for (int ci : my_tiles) {
                const auto& ct = tg.tiles[ci];
                RowRange need = receptive_field(op, ct.out_rows);
                for (int pj : find_tiles(pi)) {
                    const auto& pt = tg.tiles[pj];
                    int64_t rlo = std::max(need.lo, pt.out_rows.lo);
                    int64_t rhi = std::min(need.hi, pt.out_rows.hi);
                    int64_t tlo = std::max(ct.t_range.lo, pt.t_range.lo);
                    int64_t thi = std::min(ct.t_range.hi, pt.t_range.hi);
                    if (rlo >= rhi || tlo >= thi) continue;
                    Bits bits = Bits(rhi - rlo) * prod.out_x * prod.out_channels *
                                (thi - tlo) * prod.out_precision;
                    tg.edges.push_back({pj, ci, EdgeKind::Data, bits});
                }
            }
        }
    }

    // Input footprint per tile = the producer tensors it must co-host in the
    // scratchpad (whole band tensors, halos included).
    {
        std::vector<std::set<int>> producers(tg.tiles.size());
        for (const auto& e : tg.edges)
            if (e.kind == EdgeKind::Data) producers[e.to].insert(e.from);
        for (size_t i = 0; i < tg.tiles.size(); ++i) {
            Bits sum = 0;
            for (int p : producers[i]) sum += tg.tiles[p].output_bits;
            tg.tiles[i].input_bits = sum;
        }
    }
    return tg;
}

}  // namespace stems::tilegraph
