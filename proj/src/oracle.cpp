#include "stems/oracle.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace stems::oracle {

using intramap::AccessCounts;
using intramap::Boundary;
using intramap::Dir;
using intramap::LoopNest;
using intramap::MappingCost;
using intramap::StateHome;
using intramap::TileShape;
using scheduler::TensorId;
using scheduler::TensorKind;
using tilegraph::EdgeKind;
using workload::OpClass;

// ---------------------------------------------------------------------------
// Element-level nest walk

namespace {

inline bool reduction_axis(Axis a) {
    return a == Axis::C || a == Axis::FY || a == Axis::FX;
}
inline bool spatial_out_axis(Axis a) {
    return a == Axis::K || a == Axis::OY || a == Axis::OX;
}

}  // namespace

SimCounters simulate_nest(const LoopNest& nest, const TileShape& shape) {
    SimCounters sc;
    if (shape.op_class == OpClass::InputSource) return sc;
    const int n = int(nest.loops.size());
    const int64_t u = nest.unrolled();
    const bool has_w =
        shape.op_class == OpClass::Conv2D || shape.op_class == OpClass::Pointwise;

    // per-iteration element reads from the local buffers
    int64_t in_reads_per_iter;
    if (has_w) in_reads_per_iter = nest.u_oy * nest.u_ox;  // shared across columns
    else in_reads_per_iter = u * shape.num_input_operands;
    int64_t wt_reads_per_iter = has_w ? nest.u_k : 0;

    // region sizes (uniform, unclamped sliding windows)
    auto ext = [&](Axis a, int d) {
        int64_t e = a == Axis::K ? nest.u_k
                  : a == Axis::OY ? nest.u_oy
                  : a == Axis::OX ? nest.u_ox : 1;
        for (int i = 0; i < d; ++i)
            if (nest.loops[i].axis == a) e *= nest.loops[i].bound;
        return e;
    };
    Axis chan = has_w ? Axis::C : Axis::K;
    int64_t in_region = ext(chan, nest.in_depth) * ext(Axis::T, nest.in_depth) *
                        ((ext(Axis::OY, nest.in_depth) - 1) * shape.stride_y +
                         ext(Axis::FY, nest.in_depth)) *
                        ((ext(Axis::OX, nest.in_depth) - 1) * shape.stride_x +
                         ext(Axis::FX, nest.in_depth));
    int64_t wt_region = ext(Axis::K, nest.wt_depth) * ext(Axis::C, nest.wt_depth) *
                        ext(Axis::FY, nest.wt_depth) * ext(Axis::FX, nest.wt_depth);

    auto input_relevant = [&](Axis a) { return has_w ? a != Axis::K : a != Axis::C; };

    int64_t red_total = 1, t_total = 1;
    for (const auto& l : nest.loops) {
        if (reduction_axis(l.axis)) red_total *= l.bound;
        if (l.axis == Axis::T) t_total *= l.bound;
    }

    std::vector<int64_t> idx(n, 0);
    auto combined = [&](int from, const std::function<bool(Axis)>& pred) {
        int64_t v = 0, place = 1;
        for (int i = from; i < n; ++i) {
            if (!pred(nest.loops[i].axis)) continue;
            v += idx[i] * place;
            place *= nest.loops[i].bound;
        }
        return v;
    };

    // accumulator occupancy: one group of `u` lanes at a time
    struct Progress {
        int64_t t_next = 0;
        int64_t red_next = 0;
    };
    std::map<int64_t, Progress> progress;
    int64_t occupant = -1;

    auto park_state = [&](Bits bits_each, OperandKind kind) {
        Bits b = Bits(u) * bits_each;
        sc.counts.at(Boundary::GbAcc, kind, Dir::Away) += b;
        if (nest.state_home == StateHome::DramStream &&
            kind == OperandKind::AccumulatorState)
            sc.counts.at(Boundary::DramGb, kind, Dir::Away) += b;
    };
    auto load_state = [&](Bits bits_each, OperandKind kind) {
        Bits b = Bits(u) * bits_each;
        sc.counts.at(Boundary::GbAcc, kind, Dir::Toward) += b;
        if (nest.state_home == StateHome::DramStream &&
            kind == OperandKind::AccumulatorState)
            sc.counts.at(Boundary::DramGb, kind, Dir::Toward) += b;
    };

    auto park_occupant = [&]() {
        if (occupant < 0) return;
        const Progress& p = progress[occupant];
        if (p.red_next > 0) {
            // interrupted mid-reduction: park raw accumulators
            if (shape.stateful)
                park_state(workload::kAccumulatorBits, OperandKind::AccumulatorState);
            else {
                Bits b = Bits(u) * workload::kAccumulatorBits;
                sc.counts.at(Boundary::GbAcc, OperandKind::OutputFeature, Dir::Away) += b;
            }
        } else if (shape.stateful) {
            bool done = p.t_next >= t_total;
            if (!(done && shape.last_t))
                park_state(workload::kStateBits, OperandKind::AccumulatorState);
        }
        occupant = -1;
    };

    std::array<int64_t, 7> last_in_key, last_wt_key;
    bool have_in_key = false, have_wt_key = false;

    int64_t total_iters = 1;
    for (const auto& l : nest.loops) total_iters *= l.bound;

    for (int64_t it = 0; it < total_iters; ++it) {
        // input region identity
        {
            std::array<int64_t, 7> key{};
            for (int a = 0; a < 7; ++a) {
                Axis ax = Axis(a);
                if (!input_relevant(ax)) continue;
                key[a] = combined(nest.in_depth, [&](Axis x) { return x == ax; });
            }
            if (!have_in_key || key != last_in_key) {
                Bits b = Bits(in_region) * shape.in_precision * shape.num_input_operands;
                sc.counts.at(Boundary::GbInBuf, OperandKind::InputFeature, Dir::Toward) += b;
                if (nest.inputs_from_dram)
                    sc.counts.at(Boundary::DramGb, OperandKind::InputFeature,
                                 Dir::Toward) += b;
                last_in_key = key;
                have_in_key = true;
            }
        }
        if (has_w) {
            std::array<int64_t, 7> key{};
            for (Axis ax : {Axis::K, Axis::C, Axis::FY, Axis::FX})
                key[int(ax)] = combined(nest.wt_depth, [&](Axis x) { return x == ax; });
            if (!have_wt_key || key != last_wt_key) {
                Bits b = Bits(wt_region) * workload::kWeightBits;
                sc.counts.at(Boundary::GbWtBuf, OperandKind::Weight, Dir::Toward) += b;
                if (nest.weights_from_dram)
                    sc.counts.at(Boundary::DramGb, OperandKind::Weight, Dir::Toward) += b;
                last_wt_key = key;
                have_wt_key = true;
            }
        }

        int64_t ng = combined(0, spatial_out_axis);
        int64_t t = combined(0, [](Axis a) { return a == Axis::T; });
        int64_t red = combined(0, reduction_axis);

        if (occupant != ng) {
            park_occupant();
            auto pit = progress.find(ng);
            if (pit == progress.end()) {
                // fresh group: zero-init unless the tile resumes mid-inference
                if (shape.stateful && !shape.first_t)
                    load_state(workload::kStateBits, OperandKind::AccumulatorState);
            } else {
                const Progress& p = pit->second;
                if (p.red_next > 0) {
                    if (shape.stateful)
                        load_state(workload::kAccumulatorBits,
                                   OperandKind::AccumulatorState);
                    else {
                        Bits b = Bits(u) * workload::kAccumulatorBits;
                        sc.counts.at(Boundary::GbAcc, OperandKind::OutputFeature,
                                     Dir::Toward) += b;
                    }
                } else if (shape.stateful) {
                    load_state(workload::kStateBits, OperandKind::AccumulatorState);
                }
            }
            occupant = ng;
        }

        // compute
        if (shape.sop) sc.sops += u;
        else sc.macs += u;
        sc.counts.at(Boundary::InBufPe, OperandKind::InputFeature, Dir::Toward) +=
            Bits(in_reads_per_iter) * shape.in_precision;
        if (has_w)
            sc.counts.at(Boundary::WtBufPe, OperandKind::Weight, Dir::Toward) +=
                Bits(wt_reads_per_iter) * workload::kWeightBits;

        // progress and activation
        Progress& p = progress[ng];
        if (red + 1 == red_total) {
            Bits b = Bits(u) * shape.out_precision;
            sc.counts.at(Boundary::GbAcc, OperandKind::OutputFeature, Dir::Away) += b;
            if (nest.output_to_dram)
                sc.counts.at(Boundary::DramGb, OperandKind::OutputFeature, Dir::Away) += b;
            p.t_next = t + 1;
            p.red_next = 0;
        } else {
            p.t_next = t;
            p.red_next = red + 1;
        }

        // odometer
        for (int i = 0; i < n; ++i) {
            if (++idx[i] < nest.loops[i].bound) break;
            idx[i] = 0;
        }
    }
    park_occupant();

    for (int k = 0; k < 5; ++k) {
        sc.dram_bits += sc.counts.bits[size_t(Boundary::DramGb)][k][0] +
                        sc.counts.bits[size_t(Boundary::DramGb)][k][1];
    }
    return sc;
}

// ---------------------------------------------------------------------------
// Schedule replay

namespace {

struct ReplayTensor {
    TensorId id;
    Bits size = 0;
    int priority = 0;
    int core = -1;
    bool in_gb = false;
    bool dram = false;
};

}  // namespace

ScheduleCheck simulate_schedule(const tilegraph::TileGraph& tg,
                                const accel::AcceleratorModel& acc,
                                intramap::Mapper& mapper,
                                const scheduler::ScheduleResult& trace,
                                uint64_t max_walk_ops) {
    ScheduleCheck out;
    const auto& w = *tg.graph;
    auto fail = [&](const std::string& msg) {
        out.ok = false;
        out.error = msg;
        return out;
    };

    auto preds = tg.predecessors();
    std::vector<bool> done(tg.tiles.size(), false);
    for (size_t i = 0; i < tg.tiles.size(); ++i)
        if (w.nodes[tg.tiles[i].id.op].is_source()) done[i] = true;

    // independent tensor lifecycle
    std::map<TensorId, ReplayTensor> tensors;
    std::vector<std::vector<const tilegraph::TileEdge*>> in_edges(tg.tiles.size());
    std::vector<int> consumers(tg.tiles.size(), 0);
    for (const auto& e : tg.edges) {
        if (e.kind != EdgeKind::Data) continue;
        in_edges[e.to].push_back(&e);
        ++consumers[e.from];
    }
    std::map<int, int> wt_uses;
    std::map<std::pair<int, int>, int> st_uses;
    for (const auto& t : tg.tiles) {
        const auto& op = w.nodes[t.id.op];
        if (op.has_weights()) ++wt_uses[t.id.op];
        if (op.stateful && t.id.t > 0) ++st_uses[{t.id.op, t.id.s}];
    }
    for (size_t i = 0; i < tg.tiles.size(); ++i) {
        const auto& t = tg.tiles[i];
        const auto& op = w.nodes[t.id.op];
        ReplayTensor rt;
        rt.id = {t.id.op, t.id.s, t.id.t,
                 op.is_source() ? TensorKind::Input : TensorKind::Feature};
        rt.size = t.output_bits;
        rt.priority = consumers[i];
        rt.dram = op.is_source();
        tensors[rt.id] = rt;
    }
    for (const auto& [opid, uses] : wt_uses) {
        ReplayTensor rt;
        rt.id = {opid, -1, -1, TensorKind::Weight};
        rt.size = Bits(w.node(opid).weight_count()) * workload::kWeightBits;
        rt.priority = uses;
        rt.dram = true;
        tensors[rt.id] = rt;
    }
    for (const auto& [key, uses] : st_uses) {
        ReplayTensor rt;
        rt.id = {key.first, key.second, -1, TensorKind::State};
        rt.priority = uses;
        tensors[rt.id] = rt;
    }

    std::vector<Bits> used(acc.cores.size(), 0);
    std::vector<std::set<TensorId>> resident(acc.cores.size());
    Bits dram_bits = 0;
    std::array<Bits, kNumOperandGroups> dram_by_group{};
    EnergyFj energy = 0;

    auto group_of_tensor = [](const TensorId& id) {
        switch (id.kind) {
        case TensorKind::Weight: return OperandGroup::Weight;
        case TensorKind::State: return OperandGroup::State;
        default: return OperandGroup::Feature;
        }
    };
    auto gb_of = [&](int core) -> const accel::MemoryLevel& {
        return acc.core(core).level(accel::LevelId::GlobalBuf);
    };
    auto drop = [&](ReplayTensor& t) {
        if (!t.in_gb) return;
        t.in_gb = false;
        used[t.core] -= t.size;
        resident[t.core].erase(t.id);
    };
    auto write_back = [&](ReplayTensor& t) {
        if (!t.in_gb) return;
        if (!t.dram) {
            dram_bits += t.size;
            dram_by_group[size_t(group_of_tensor(t.id))] += t.size;
            energy += EnergyFj(t.size) *
                      (gb_of(t.core).energy_rd + acc.dram.energy_rd * 0 +
                       acc.dram.energy_wr);
            t.dram = true;
        }
        drop(t);
    };
    auto fetch_in = [&](ReplayTensor& t, int core) {
        dram_bits += t.size;
        dram_by_group[size_t(group_of_tensor(t.id))] += t.size;
        energy += EnergyFj(t.size) * (acc.dram.energy_rd + gb_of(core).energy_wr);
        t.in_gb = true;
        t.core = core;
        used[core] += t.size;
        resident[core].insert(t.id);
    };

    for (size_t step = 0; step < trace.exec_trace.size(); ++step) {
        int ti = trace.exec_trace[step].tile;
        int core = trace.exec_trace[step].core;
        const auto& tile = tg.tiles[ti];
        const auto& op = w.nodes[tile.id.op];

        for (int p : preds[ti])
            if (!done[p])
                return fail("dependency violation at step " + std::to_string(step) +
                            ": " + tilegraph::to_string(tile.id) + " before " +
                            tilegraph::to_string(tg.tiles[p].id));

        auto shape = intramap::tile_shape(w, tile);
        const MappingCost* mc = &mapper.best_mapping(shape, core);

        TensorId out_id{tile.id.op, tile.id.s, tile.id.t, TensorKind::Feature};
        TensorId wt_id{tile.id.op, -1, -1, TensorKind::Weight};
        TensorId st_id{tile.id.op, tile.id.s, -1, TensorKind::State};
        std::vector<TensorId> in_ids;
        for (const auto* e : in_edges[ti]) {
            const auto& pt = tg.tiles[e->from];
            TensorId pid{pt.id.op, pt.id.s, pt.id.t,
                         w.nodes[pt.id.op].is_source() ? TensorKind::Input
                                                       : TensorKind::Feature};
            if (std::find(in_ids.begin(), in_ids.end(), pid) == in_ids.end())
                in_ids.push_back(pid);
        }
        auto resident_need = [&](const MappingCost& m) {
            Bits sum = 0;
            if (!m.nest.inputs_from_dram)
                for (const auto& id : in_ids) sum += tensors.at(id).size;
            if (op.has_weights() && !m.nest.weights_from_dram)
                sum += tensors.at(wt_id).size;
            if (!m.nest.output_to_dram) sum += tile.output_bits;
            if (m.nest.state_home == StateHome::GlobalBuf) sum += tile.state_bits;
            return sum;
        };
        Bits cap = gb_of(core).capacity;
        if (resident_need(*mc) > cap) mc = &mapper.best_mapping_dram(shape, core);
        bool oversized = mc->needs_dram();
        bool uses_stripe = mc->nest.state_home != StateHome::None;

        // element-level validation of the chosen nest
        uint64_t iters = 1;
        for (const auto& l : mc->nest.loops) iters *= l.bound;
        if (iters <= max_walk_ops) {
            SimCounters walked = simulate_nest(mc->nest, shape);
            if (!(walked.counts == mc->counts))
                return fail("analytical/oracle mismatch for " +
                            tilegraph::to_string(tile.id) + " nest " +
                            mc->nest.to_string() + ":\n" +
                            mc->counts.diff_string(walked.counts));
            ++out.tiles_walked;
            out.counters.counts += walked.counts;
        } else {
            out.counters.counts += mc->counts;
        }

        std::set<TensorId> required;
        if (!mc->nest.inputs_from_dram)
            for (const auto& id : in_ids) required.insert(id);
        if (op.has_weights() && !mc->nest.weights_from_dram) required.insert(wt_id);
        if (uses_stripe && mc->nest.state_home == StateHome::GlobalBuf &&
            tensors.count(st_id))
            required.insert(st_id);
        required.insert(out_id);

        if (mc->nest.inputs_from_dram)
            for (const auto& id : in_ids) write_back(tensors.at(id));
        if (op.has_weights() && mc->nest.weights_from_dram)
            write_back(tensors.at(wt_id));
        if (uses_stripe && mc->nest.state_home == StateHome::DramStream &&
            tile.id.t > 0 && tensors.count(st_id))
            write_back(tensors.at(st_id));

        if (oversized) {
            std::vector<TensorId> others(resident[core].begin(), resident[core].end());
            for (const auto& id : others) {
                if (required.count(id)) continue;
                auto& t = tensors.at(id);
                if (t.priority == 0) drop(t);
                else write_back(t);
            }
        }

        Bits incoming = 0;
        std::vector<TensorId> to_fetch;
        for (const auto& id : required) {
            if (id == out_id) continue;
            auto& t = tensors.at(id);
            if (!t.in_gb || t.core != core) {
                to_fetch.push_back(id);
                incoming += t.size;
            }
        }
        bool creates_stripe = uses_stripe &&
                              mc->nest.state_home == StateHome::GlobalBuf &&
                              tensors.count(st_id) && !tensors.at(st_id).in_gb &&
                              tile.id.t == 0;
        Bits out_alloc = mc->nest.output_to_dram ? 0 : tile.output_bits;
        Bits need = incoming + (creates_stripe ? tile.state_bits : 0) + out_alloc;

        // evictions, re-derived with the same ranking contract
        while (cap - used[core] < need) {
            std::vector<const scheduler::TensorInstance*> cands;
            std::vector<scheduler::TensorInstance> storage;
            storage.reserve(resident[core].size());
            for (const auto& id : resident[core]) {
                if (required.count(id)) continue;
                const auto& t = tensors.at(id);
                storage.push_back({t.id, t.size, t.priority, t.core, t.in_gb, t.dram});
            }
            for (const auto& s : storage) cands.push_back(&s);
            if (cands.empty())
                return fail("capacity violation at step " + std::to_string(step) +
                            ": need " + std::to_string(need) + " bits");
            auto ranked = scheduler::evict_rank(std::move(cands));
            auto& victim = tensors.at(ranked.front()->id);
            if (victim.priority == 0) drop(victim);
            else write_back(victim);
        }

        for (const auto& id : to_fetch) {
            auto& t = tensors.at(id);
            if (!t.in_gb) {
                if (id.kind == TensorKind::State && tile.id.t == 0) continue;
                if (!t.dram)
                    return fail("tensor " + scheduler::to_string(id) +
                                " not available at step " + std::to_string(step));
                fetch_in(t, core);
            } else {
                // NoC move between cores
                const auto* link = acc.find_link(t.core, core);
                energy += EnergyFj(t.size) *
                          (gb_of(t.core).energy_rd + gb_of(core).energy_wr +
                           (link ? link->energy : 0));
                drop(t);
                t.in_gb = true;
                t.core = core;
                used[core] += t.size;
                resident[core].insert(t.id);
            }
        }
        if (creates_stripe) {
            auto& st = tensors.at(st_id);
            st.size = tile.state_bits;
            st.in_gb = true;
            st.core = core;
            used[core] += st.size;
            resident[core].insert(st_id);
        }
        if (uses_stripe && tensors.count(st_id)) {
            auto& st = tensors.at(st_id);
            st.size = tile.state_bits;
            if (mc->nest.state_home == StateHome::DramStream)
                st.dram = !shape.last_t;
            else if (st.in_gb)
                st.dram = false;
        }

        if (used[core] > cap)
            return fail("capacity exceeded after fetches at step " +
                        std::to_string(step));

        energy += mc->energy;
        static const OperandKind kKinds[] = {
            OperandKind::Weight, OperandKind::InputFeature, OperandKind::OutputFeature,
            OperandKind::AccumulatorState, OperandKind::AuxState};
        for (OperandKind k : kKinds) {
            Bits b = mc->counts.get(Boundary::DramGb, k, Dir::Toward) +
                     mc->counts.get(Boundary::DramGb, k, Dir::Away);
            if (b) {
                dram_bits += b;
                dram_by_group[size_t(group_of(k))] += b;
            }
        }

        {
            auto& t = tensors.at(out_id);
            t.core = core;
            if (mc->nest.output_to_dram) {
                t.in_gb = false;
                t.dram = true;
            } else {
                t.in_gb = true;
                used[core] += t.size;
                resident[core].insert(out_id);
            }
        }
        for (const auto* e : in_edges[ti]) {
            const auto& pt = tg.tiles[e->from];
            TensorId pid{pt.id.op, pt.id.s, pt.id.t,
                         w.nodes[pt.id.op].is_source() ? TensorKind::Input
                                                       : TensorKind::Feature};
            auto& t = tensors.at(pid);
            if (t.priority > 0) --t.priority;
            if (t.in_gb && t.priority == 0) drop(t);
        }
        if (op.has_weights()) {
            auto& t = tensors.at(wt_id);
            if (t.priority > 0) --t.priority;
            if (t.in_gb && t.priority == 0) drop(t);
        }
        if (op.stateful && tile.id.t > 0 && tensors.count(st_id)) {
            auto& t = tensors.at(st_id);
            if (t.priority > 0) --t.priority;
            if (t.in_gb && t.priority == 0) drop(t);
        }
        {
            auto& t = tensors.at(out_id);
            if (t.priority == 0 && t.in_gb && !t.dram) write_back(t);
            if (t.in_gb && t.priority == 0) drop(t);
        }
        done[ti] = true;
    }

    out.counters.dram_bits = dram_bits;
    out.counters.dram_bits_by_group = dram_by_group;
    if (dram_bits != trace.dram_bits)
        return fail("dram_bits mismatch: replay " + std::to_string(dram_bits) +
                    " vs trace " + std::to_string(trace.dram_bits));
    for (int g = 0; g < kNumOperandGroups; ++g)
        if (dram_by_group[g] != trace.dram_bits_by_group[g])
            return fail(std::string("dram bits mismatch for operand group '") +
                        to_string(OperandGroup(g)) + "': replay " +
                        std::to_string(dram_by_group[g]) + " vs trace " +
                        std::to_string(trace.dram_bits_by_group[g]));
    out.ok = true;
    return out;
}

// ---------------------------------------------------------------------------
// Functional execution

namespace {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// deterministic synthetic weight in {-0.5, -0.25, 0, 0.25, 0.5}
inline double synth_weight(int op, int64_t k, int64_t c, int64_t fy, int64_t fx) {
    uint64_t h = splitmix64((uint64_t(op) << 48) ^ (uint64_t(k) << 32) ^
                            (uint64_t(c) << 16) ^ (uint64_t(fy) << 8) ^ uint64_t(fx));
    return (double(h % 5) - 2.0) * 0.25;
}

struct Engine {
    const workload::WorkloadGraph* w;
    // plane[op][t][k*oy*ox]
    std::vector<std::vector<std::vector<double>>> plane;
    std::vector<std::vector<double>> state;
    std::vector<std::vector<uint8_t>> prev_spike;

    explicit Engine(const workload::WorkloadGraph& g, uint64_t seed) : w(&g) {
        int n = int(g.nodes.size());
        plane.resize(n);
        state.resize(n);
        prev_spike.resize(n);
        for (int i = 0; i < n; ++i) {
            const auto& op = g.nodes[i];
            int64_t sz = op.neuron_count();
            plane[i].assign(g.total_timesteps, std::vector<double>(sz, 0.0));
            state[i].assign(sz, 0.0);
            prev_spike[i].assign(sz, 0);
        }
        // seeded spike inputs, p(spike) = 0.1
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            const auto& op = g.nodes[i];
            if (!op.is_source()) continue;
            for (int64_t t = 0; t < g.total_timesteps; ++t)
                for (auto& v : plane[i][t]) v = uni(rng) < 0.1 ? 1.0 : 0.0;
        }
    }

    int index_of(int id) const {
        for (size_t i = 0; i < w->nodes.size(); ++i)
            if (w->nodes[i].id == id) return int(i);
        throw ModelError("bad node id");
    }

    double at(int oi, int64_t t, int64_t k, int64_t y, int64_t x) const {
        const auto& op = w->nodes[oi];
        if (y < 0 || y >= op.out_y || x < 0 || x >= op.out_x) return 0.0;
        return plane[oi][t][(k * op.out_y + y) * op.out_x + x];
    }

    void compute(int oi, int64_t t, int64_t y_lo, int64_t y_hi) {
        const auto& op = w->nodes[oi];
        if (op.is_source()) return;
        const auto& pr = op.projection;
        int a0 = index_of(op.inputs[0]);
        int a1 = op.inputs.size() > 1 ? index_of(op.inputs[1]) : -1;
        for (int64_t k = 0; k < op.out_channels; ++k)
            for (int64_t y = y_lo; y < y_hi; ++y)
                for (int64_t x = 0; x < op.out_x; ++x) {
                    int64_t ni = (k * op.out_y + y) * op.out_x + x;
                    double out = 0.0;
                    switch (op.op_class) {
                    case OpClass::Conv2D:
                    case OpClass::Pointwise: {
                        double acc = 0.0;
                        for (int64_t ci = 0; ci < op.in_channels; ++ci)
                            for (int fy = 0; fy < pr.kernel_y; ++fy)
                                for (int fx = 0; fx < pr.kernel_x; ++fx) {
                                    int64_t iy = y * pr.stride_y - pr.pad_y + fy;
                                    int64_t ix = x * pr.stride_x - pr.pad_x + fx;
                                    acc += synth_weight(op.id, k, ci, fy, fx) *
                                           at(a0, t, ci, iy, ix);
                                }
                        if (op.stateful) {
                            auto [v, s] = workload::lif_step(state[oi][ni], acc,
                                                             *op.lif, prev_spike[oi][ni]);
                            state[oi][ni] = v;
                            prev_spike[oi][ni] = uint8_t(s);
                            out = s;
                        } else if (op.lif) {
                            out = acc >= op.lif->v_threshold ? 1.0 : 0.0;
                        } else {
                            out = acc > 0 ? acc : 0.0;  // folded ReLU
                        }
                        break;
                    }
                    case OpClass::ElementwiseAdd:
                        out = at(a0, t, k, y, x) + at(a1, t, k, y, x);
                        break;
                    case OpClass::ElementwiseOr:
                        out = (at(a0, t, k, y, x) != 0.0 || at(a1, t, k, y, x) != 0.0)
                                  ? 1.0 : 0.0;
                        break;
                    case OpClass::MaxPool: {
                        double m = -1e300;
                        for (int fy = 0; fy < pr.kernel_y; ++fy)
                            for (int fx = 0; fx < pr.kernel_x; ++fx) {
                                int64_t iy = y * pr.stride_y - pr.pad_y + fy;
                                int64_t ix = x * pr.stride_x - pr.pad_x + fx;
                                m = std::max(m, at(a0, t, k, iy, ix));
                            }
                        out = m;
                        break;
                    }
                    case OpClass::InputSource: break;
                    }
                    plane[oi][t][ni] = out;
                }
    }
};

}  // namespace

bool functional_check(const tilegraph::TileGraph& tg, const std::vector<int>& order,
                      uint64_t seed) {
    const auto& w = *tg.graph;

    // reference: naive t-major whole-network execution
    Engine ref(w, seed);
    for (int64_t t = 0; t < w.total_timesteps; ++t)
        for (size_t oi = 0; oi < w.nodes.size(); ++oi)
            ref.compute(int(oi), t, 0, w.nodes[oi].out_y);

    // candidate: execute tiles in the given order
    Engine cand(w, seed);
    for (int ti : order) {
        const auto& tile = tg.tiles[ti];
        for (int64_t t = tile.t_range.lo; t < tile.t_range.hi; ++t)
            cand.compute(tile.id.op, t, tile.out_rows.lo, tile.out_rows.hi);
    }

    for (size_t oi = 0; oi < w.nodes.size(); ++oi)
        for (int64_t t = 0; t < w.total_timesteps; ++t)
            if (ref.plane[oi][t] != cand.plane[oi][t]) return false;
    return true;
}

}  // namespace stems::oracle
