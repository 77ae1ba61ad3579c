#include "stems/scheduler.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace stems::scheduler {

using intramap::MappingCost;
using intramap::StateHome;
using tilegraph::EdgeKind;
using tilegraph::TileGraph;
using workload::OpClass;

std::string to_string(const TensorId& id) {
    std::ostringstream os;
    switch (id.kind) {
    case TensorKind::Feature: os << "feat"; break;
    case TensorKind::Weight: os << "wt"; break;
    case TensorKind::State: os << "state"; break;
    case TensorKind::Input: os << "in"; break;
    }
    os << "(" << id.op << "," << id.s << "," << id.t << ")";
    return os.str();
}

void EnergyBreakdown::merge(const MappingCost& mc) {
    for (int c = 0; c < accel::kNumComponents; ++c)
        for (int g = 0; g < kNumOperandGroups; ++g) {
            cells[c][g] += mc.breakdown[c][g];
            total += mc.breakdown[c][g];
        }
}

EnergyFj EnergyBreakdown::sum_cells() const {
    EnergyFj s = 0;
    for (const auto& row : cells)
        for (EnergyFj e : row) s += e;
    return s;
}

std::string EnergyBreakdown::to_csv() const {
    std::ostringstream os;
    os << "component,operand,energy_fj\n";
    for (int c = 0; c < accel::kNumComponents; ++c)
        for (int g = 0; g < kNumOperandGroups; ++g)
            os << to_string(accel::Component(c)) << ","
               << to_string(OperandGroup(g)) << "," << cells[c][g] << "\n";
    return os.str();
}

std::string ScheduleResult::summary() const {
    std::ostringstream os;
    os << "energy_fj=" << energy.total << " latency_cycles=" << latency
       << " dram_bits=" << dram_bits;
    return os.str();
}

// ---------------------------------------------------------------------------
// Deterministic order

std::vector<int> scheduling_order(const TileGraph& tg) {
    const auto& w = *tg.graph;
    int n_ops = int(w.nodes.size());

    // fusion groups: maximal runs of consecutive spatially-cut blocks
    int n_blocks = w.num_blocks();
    std::vector<int> group_of_block(n_blocks, 0);
    std::vector<bool> fused(n_blocks, false);
    for (int b = 0; b < n_blocks; ++b)
        fused[b] = tg.cuts.for_block(b).spatial_cut > 1;
    int group = 0;
    for (int b = 0; b < n_blocks; ++b) {
        if (b > 0 && !(fused[b] && fused[b - 1])) ++group;
        group_of_block[b] = group;
    }

    std::vector<int> depth_in_block(n_ops, 0);
    {
        std::vector<int> next_depth(n_blocks, 0);
        for (int oi = 0; oi < n_ops; ++oi)
            depth_in_block[oi] = next_depth[w.nodes[oi].block_id]++;
    }

    using Key = std::array<int64_t, 5>;
    auto key_of = [&](int ti) {
        const auto& t = tg.tiles[ti];
        const auto& op = w.nodes[t.id.op];
        int blk = op.block_id;
        const auto& cut = tg.op_cuts[t.id.op];
        int64_t n_s = std::max<int64_t>(1, std::min(cut.spatial_cut, op.out_y));
        int64_t n_t = (w.total_timesteps + cut.temporal_cut - 1) / cut.temporal_cut;
        int64_t tpos = ((int64_t(t.id.t) + 1) << 20) / std::max<int64_t>(1, n_t);
        int64_t spos = ((int64_t(t.id.s) + 1) << 20) / n_s;
        if (fused[blk])
            return Key{group_of_block[blk], tpos, spos, depth_in_block[t.id.op],
                       int64_t(ti)};
        // LBL: one temporal slice of the block at a time, layer-major within it
        return Key{group_of_block[blk], tpos, int64_t(depth_in_block[t.id.op]), spos,
                   int64_t(ti)};
    };

    // Kahn with a min-heap over the preference key: yields exactly the
    // described order where it is already a linear extension, and the nearest
    // legal schedule where receptive-field halos force a skew.
    std::vector<int> indeg(tg.tiles.size(), 0);
    std::vector<std::vector<int>> succ(tg.tiles.size());
    for (const auto& e : tg.edges) {
        ++indeg[e.to];
        succ[e.from].push_back(e.to);
    }
    using HeapItem = std::pair<Key, int>;
    std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<>> ready;
    for (size_t i = 0; i < tg.tiles.size(); ++i)
        if (indeg[i] == 0) ready.push({key_of(int(i)), int(i)});
    std::vector<int> order;
    order.reserve(tg.tiles.size());
    while (!ready.empty()) {
        int ti = ready.top().second;
        ready.pop();
        order.push_back(ti);
        for (int s : succ[ti])
            if (--indeg[s] == 0) ready.push({key_of(s), s});
    }
    if (order.size() != tg.tiles.size())
        throw ModelError("tile graph has a cycle");
    return order;
}

// ---------------------------------------------------------------------------
// Eviction ranking

std::vector<const TensorInstance*> evict_rank(
    std::vector<const TensorInstance*> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const TensorInstance* a, const TensorInstance* b) {
                         if (a->priority != b->priority)
                             return a->priority < b->priority;
                         if (a->size != b->size) return a->size > b->size;
                         return a->id < b->id;
                     });
    return candidates;
}

// ---------------------------------------------------------------------------
// Schedule execution

namespace {

OperandGroup group_of_tensor(const TensorId& id) {
    switch (id.kind) {
    case TensorKind::Weight: return OperandGroup::Weight;
    case TensorKind::State: return OperandGroup::State;
    default: return OperandGroup::Feature;
    }
}

struct Ctx {
    const TileGraph* tg;
    const accel::AcceleratorModel* acc;
    const std::map<int, int>* alloc;
    ScheduleOptions opts;

    std::map<TensorId, TensorInstance> tensors;
    std::vector<std::set<TensorId>> resident;  // per core, deterministic order
    std::vector<Bits> gb_used;
    std::vector<Cycles> core_free;
    Cycles link_free = 0;
    ScheduleResult res;

    int core_of(int op) const {
        auto it = alloc->find(op);
        return it == alloc->end() ? 0 : it->second;
    }
    Bits gb_cap(int core) const {
        return acc->core(core).level(accel::LevelId::GlobalBuf).capacity;
    }
    Cycles link_cycles(int core, Bits bits) const {
        uint64_t bw = acc->dram_link(core).bandwidth;
        return bw == 0 ? 0 : (bits + bw - 1) / bw;
    }

    void account_dram(OperandGroup g, Bits bits) {
        res.dram_bits += bits;
        res.dram_bits_by_group[size_t(g)] += bits;
    }

    void remove_from_gb(TensorInstance& t) {
        t.in_gb = false;
        gb_used[t.home_core] -= t.size;
        resident[t.home_core].erase(t.id);
    }
    void add_to_gb(TensorInstance& t, int core) {
        t.in_gb = true;
        t.home_core = core;
        gb_used[core] += t.size;
        resident[core].insert(t.id);
    }

    void writeback(TensorInstance& t, Cycles earliest) {
        if (!t.in_gb) return;
        int core = t.home_core;
        if (!t.has_dram_copy) {
            const auto& gb = acc->core(core).level(accel::LevelId::GlobalBuf);
            Cycles start = std::max(link_free, earliest);
            Cycles end = start + link_cycles(core, t.size);
            link_free = end;
            OperandGroup g = group_of_tensor(t.id);
            res.energy.add(accel::Component::GlobalSram, g,
                           EnergyFj(t.size) * gb.energy_rd);
            res.energy.add(accel::Component::Dram, g,
                           EnergyFj(t.size) * acc->dram.energy_wr);
            account_dram(g, t.size);
            res.xfer_trace.push_back({t.id, core, true, t.size, start, end});
            t.has_dram_copy = true;
        }
        remove_from_gb(t);
    }

    void fetch(TensorInstance& t, int core, Cycles earliest, Cycles& fetches_end) {
        const auto& gb = acc->core(core).level(accel::LevelId::GlobalBuf);
        Cycles start = std::max(link_free, earliest);
        Cycles end = start + link_cycles(core, t.size);
        link_free = end;
        fetches_end = std::max(fetches_end, end);
        OperandGroup g = group_of_tensor(t.id);
        res.energy.add(accel::Component::Dram, g, EnergyFj(t.size) * acc->dram.energy_rd);
        res.energy.add(accel::Component::GlobalSram, g, EnergyFj(t.size) * gb.energy_wr);
        account_dram(g, t.size);
        res.xfer_trace.push_back({t.id, core, false, t.size, start, end});
        add_to_gb(t, core);
    }

    void noc_move(TensorInstance& t, int core, Cycles earliest, Cycles& fetches_end) {
        const auto* link = acc->find_link(t.home_core, core);
        uint64_t bw = link ? link->bandwidth : 32;
        const auto& gsrc = acc->core(t.home_core).level(accel::LevelId::GlobalBuf);
        const auto& gdst = acc->core(core).level(accel::LevelId::GlobalBuf);
        OperandGroup g = group_of_tensor(t.id);
        res.energy.add(accel::Component::GlobalSram, g,
                       EnergyFj(t.size) * (gsrc.energy_rd + gdst.energy_wr));
        if (link && link->energy)
            res.energy.add(accel::Component::Noc, g, EnergyFj(t.size) * link->energy);
        Cycles start = std::max(link_free, earliest);
        Cycles end = start + (bw ? (t.size + bw - 1) / bw : 0);
        link_free = end;
        fetches_end = std::max(fetches_end, end);
        res.xfer_trace.push_back({t.id, core, false, t.size, start, end});
        remove_from_gb(t);
        add_to_gb(t, core);
    }

    // evict until `need` bits fit; protected tensors stay
    void make_room(int core, Bits need, const std::set<TensorId>& prot,
                   Cycles earliest) {
        Bits cap = gb_cap(core);
        if (need > cap)
            throw ModelError("tile working set exceeds scratchpad capacity: need " +
                             std::to_string(need) + " bits, capacity " +
                             std::to_string(cap) + " bits");
        while (cap - gb_used[core] < need) {
            std::vector<const TensorInstance*> cands;
            for (const auto& id : resident[core])
                if (!prot.count(id)) cands.push_back(&tensors.at(id));
            if (cands.empty())
                throw ModelError("cannot free scratchpad space, all residents required");
            auto ranked = evict_rank(std::move(cands));
            auto& victim = tensors.at(ranked.front()->id);
            if (victim.priority == 0) remove_from_gb(victim);
            else writeback(victim, earliest);
        }
    }
};

}  // namespace

ScheduleResult schedule(const TileGraph& tg, const accel::AcceleratorModel& acc,
                        intramap::Mapper& mapper,
                        const std::map<int, int>& op_to_core,
                        const ScheduleOptions& opts) {
    const auto& w = *tg.graph;
    Ctx c{&tg, &acc, &op_to_core, opts};
    c.gb_used.assign(acc.cores.size(), 0);
    c.core_free.assign(acc.cores.size(), 0);
    c.resident.resize(acc.cores.size());
    c.res.gb_peak.assign(acc.cores.size(), 0);
    for (const auto& [op, core] : op_to_core) acc.core(core);

    auto order = scheduling_order(tg);
    c.res.order = order;
    auto preds = tg.predecessors();

    // incoming data edges per tile
    std::vector<std::vector<const tilegraph::TileEdge*>> in_edges(tg.tiles.size());
    std::vector<int> feat_consumers(tg.tiles.size(), 0);
    for (const auto& e : tg.edges) {
        if (e.kind != EdgeKind::Data) continue;
        in_edges[e.to].push_back(&e);
        ++feat_consumers[e.from];
    }

    // Tensor registry with global look-ahead priorities.
    std::map<int, int> weight_uses;
    std::map<std::pair<int, int>, int> stripe_uses;
    for (const auto& t : tg.tiles) {
        const auto& op = w.nodes[t.id.op];
        if (op.has_weights()) ++weight_uses[t.id.op];
        if (op.stateful && t.id.t > 0) ++stripe_uses[{t.id.op, t.id.s}];
    }
    for (size_t i = 0; i < tg.tiles.size(); ++i) {
        const auto& t = tg.tiles[i];
        const auto& op = w.nodes[t.id.op];
        TensorId fid{t.id.op, t.id.s, t.id.t,
                     op.is_source() ? TensorKind::Input : TensorKind::Feature};
        TensorInstance ti;
        ti.id = fid;
        ti.size = t.output_bits;
        ti.priority = feat_consumers[i];
        ti.home_core = c.core_of(t.id.op);
        if (op.is_source()) ti.has_dram_copy = true;  // DVS input is DRAM-resident
        c.tensors.emplace(fid, ti);
    }
    for (const auto& [opid, uses] : weight_uses) {
        TensorId wid{opid, -1, -1, TensorKind::Weight};
        TensorInstance ti;
        ti.id = wid;
        ti.size = Bits(w.node(opid).weight_count()) * workload::kWeightBits;
        ti.priority = uses;
        ti.home_core = c.core_of(opid);
        ti.has_dram_copy = true;  // read-only, never written back
        c.tensors.emplace(wid, ti);
    }
    for (const auto& [key, uses] : stripe_uses) {
        TensorId sid{key.first, key.second, -1, TensorKind::State};
        TensorInstance ti;
        ti.id = sid;
        ti.priority = uses;
        ti.home_core = c.core_of(key.first);
        c.tensors.emplace(sid, ti);
    }

    std::vector<Cycles> tile_end(tg.tiles.size(), 0);

    for (int ti : order) {
        const auto& tile = tg.tiles[ti];
        const auto& op = w.nodes[tile.id.op];
        if (op.is_source()) continue;
        int core = c.core_of(tile.id.op);
        Bits cap = c.gb_cap(core);

        auto shape = intramap::tile_shape(w, tile);
        const MappingCost* mc = &mapper.best_mapping(shape, core);
        if (!mc->valid)
            throw ModelError("no valid mapping for tile " + tilegraph::to_string(tile.id));

        TensorId out_id{tile.id.op, tile.id.s, tile.id.t, TensorKind::Feature};
        TensorId wt_id{tile.id.op, -1, -1, TensorKind::Weight};
        TensorId st_id{tile.id.op, tile.id.s, -1, TensorKind::State};

        std::vector<TensorId> in_ids;
        for (const auto* e : in_edges[ti]) {
            const auto& pt = tg.tiles[e->from];
            const auto& pop = w.nodes[pt.id.op];
            TensorId pid{pt.id.op, pt.id.s, pt.id.t,
                         pop.is_source() ? TensorKind::Input : TensorKind::Feature};
            if (std::find(in_ids.begin(), in_ids.end(), pid) == in_ids.end())
                in_ids.push_back(pid);
        }

        // runtime fit check with actual tensor sizes; fall back to the
        // DRAM-backed mapping when the co-resident set cannot fit
        auto resident_need = [&](const MappingCost& m) {
            Bits sum = 0;
            if (!m.nest.inputs_from_dram)
                for (const auto& id : in_ids) sum += c.tensors.at(id).size;
            if (op.has_weights() && !m.nest.weights_from_dram)
                sum += c.tensors.at(wt_id).size;
            if (!m.nest.output_to_dram) sum += tile.output_bits;
            if (m.nest.state_home == StateHome::GlobalBuf) sum += tile.state_bits;
            return sum;
        };
        if (resident_need(*mc) > cap) {
            mc = &mapper.best_mapping_dram(shape, core);
            if (!mc->valid || resident_need(*mc) > cap)
                throw ModelError("tile " + tilegraph::to_string(tile.id) +
                                 " unschedulable: single tensor set larger than scratchpad");
        }
        bool oversized = mc->needs_dram();
        bool uses_stripe = mc->nest.state_home != StateHome::None;

        std::set<TensorId> required;
        if (!mc->nest.inputs_from_dram)
            for (const auto& id : in_ids) required.insert(id);
        if (op.has_weights() && !mc->nest.weights_from_dram) required.insert(wt_id);
        if (uses_stripe && mc->nest.state_home == StateHome::GlobalBuf &&
            c.tensors.count(st_id))
            required.insert(st_id);
        required.insert(out_id);

        Cycles deps_end = 0;
        for (int p : preds[ti]) deps_end = std::max(deps_end, tile_end[p]);
        Cycles earliest =
            c.opts.prefetch ? deps_end : std::max(deps_end, c.core_free[core]);

        // operands the mapping streams from DRAM need a DRAM-resident tensor
        auto force_to_dram = [&](const TensorId& id) {
            auto it = c.tensors.find(id);
            if (it != c.tensors.end() && it->second.in_gb)
                c.writeback(it->second, earliest);
        };
        if (mc->nest.inputs_from_dram)
            for (const auto& id : in_ids) force_to_dram(id);
        if (op.has_weights() && mc->nest.weights_from_dram) force_to_dram(wt_id);
        if (uses_stripe && mc->nest.state_home == StateHome::DramStream && tile.id.t > 0)
            force_to_dram(st_id);

        if (oversized) {
            // evict all non-required tensors; the link serves only this tile
            std::vector<TensorId> others;
            for (const auto& id : c.resident[core])
                if (!required.count(id)) others.push_back(id);
            for (const auto& id : others) {
                auto& t = c.tensors.at(id);
                if (t.priority == 0) c.remove_from_gb(t);
                else c.writeback(t, earliest);
            }
        }

        Cycles fetches_end = earliest;
        Bits incoming = 0;
        std::vector<TensorId> to_fetch;
        for (const auto& id : required) {
            if (id == out_id) continue;
            auto& t = c.tensors.at(id);
            if (!t.in_gb || t.home_core != core) {
                to_fetch.push_back(id);
                incoming += t.size;
            }
        }
        bool creates_stripe = uses_stripe &&
                              mc->nest.state_home == StateHome::GlobalBuf &&
                              c.tensors.count(st_id) && !c.tensors.at(st_id).in_gb &&
                              tile.id.t == 0;
        Bits new_stripe = creates_stripe ? tile.state_bits : 0;
        Bits out_alloc = mc->nest.output_to_dram ? 0 : tile.output_bits;
        c.make_room(core, incoming + new_stripe + out_alloc, required, earliest);

        for (const auto& id : to_fetch) {
            auto& t = c.tensors.at(id);
            if (!t.in_gb) {
                if (id.kind == TensorKind::State && tile.id.t == 0) continue;
                if (!t.has_dram_copy)
                    throw ModelError("tensor " + to_string(id) +
                                     " needed but neither resident nor in DRAM");
                c.fetch(t, core, earliest, fetches_end);
            } else {
                c.noc_move(t, core, earliest, fetches_end);
            }
        }

        if (creates_stripe) {
            auto& st = c.tensors.at(st_id);
            st.size = tile.state_bits;
            c.add_to_gb(st, core);
        }
        if (uses_stripe && c.tensors.count(st_id)) {
            auto& st = c.tensors.at(st_id);
            st.size = tile.state_bits;
            if (mc->nest.state_home == StateHome::DramStream)
                st.has_dram_copy = !shape.last_t;  // parked back by the mapping
            else if (st.in_gb)
                st.has_dram_copy = false;  // updated in place
        }

        Cycles start = std::max({c.core_free[core], deps_end, fetches_end});
        if (oversized) start = std::max(start, c.link_free);
        Cycles end = start + mc->latency;
        if (oversized) c.link_free = end;
        c.core_free[core] = end;
        tile_end[ti] = end;
        c.res.exec_trace.push_back({ti, core, start, end});
        c.res.energy.merge(*mc);

        static const OperandKind kKinds[] = {
            OperandKind::Weight, OperandKind::InputFeature, OperandKind::OutputFeature,
            OperandKind::AccumulatorState, OperandKind::AuxState};
        for (OperandKind k : kKinds) {
            Bits b =
                mc->counts.get(intramap::Boundary::DramGb, k, intramap::Dir::Toward) +
                mc->counts.get(intramap::Boundary::DramGb, k, intramap::Dir::Away);
            if (b) c.account_dram(group_of(k), b);
        }

        // produce
        {
            auto& t = c.tensors.at(out_id);
            t.home_core = core;
            if (mc->nest.output_to_dram) {
                t.in_gb = false;
                t.has_dram_copy = true;
            } else {
                c.add_to_gb(t, core);
            }
        }

        // consume and retire
        std::vector<TensorId> touched;
        for (const auto* e : in_edges[ti]) {
            const auto& pt = tg.tiles[e->from];
            const auto& pop = w.nodes[pt.id.op];
            TensorId pid{pt.id.op, pt.id.s, pt.id.t,
                         pop.is_source() ? TensorKind::Input : TensorKind::Feature};
            auto& t = c.tensors.at(pid);
            if (t.priority > 0) --t.priority;
            touched.push_back(pid);
        }
        if (op.has_weights()) {
            auto& t = c.tensors.at(wt_id);
            if (t.priority > 0) --t.priority;
            touched.push_back(wt_id);
        }
        if (op.stateful && tile.id.t > 0 && c.tensors.count(st_id)) {
            auto& t = c.tensors.at(st_id);
            if (t.priority > 0) --t.priority;
            touched.push_back(st_id);
        }
        // final network outputs leave the chip
        {
            auto& t = c.tensors.at(out_id);
            if (t.priority == 0 && t.in_gb && !t.has_dram_copy) c.writeback(t, end);
            touched.push_back(out_id);
        }
        for (const auto& id : touched) {
            auto& t = c.tensors.at(id);
            if (t.in_gb && t.priority == 0) c.remove_from_gb(t);
        }

        for (size_t i = 0; i < c.gb_used.size(); ++i)
            c.res.gb_peak[i] = std::max(c.res.gb_peak[i], c.gb_used[i]);
    }

    Cycles lat = c.link_free;
    for (Cycles e : c.core_free) lat = std::max(lat, e);
    c.res.latency = lat;
    return c.res;
}

}  // namespace stems::scheduler
