#include "stems/intramap.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <unordered_set>

namespace stems::intramap {

using accel::Component;
using workload::OpClass;

std::vector<int64_t> prime_factorize(int64_t n) {
    if (n < 1) throw ModelError("prime_factorize: n must be >= 1");
    std::vector<int64_t> out;
    for (int64_t p = 2; p * p <= n; ++p)
        while (n % p == 0) {
            out.push_back(p);
            n /= p;
        }
    if (n > 1) out.push_back(n);
    return out;
}

const char* to_string(Boundary b) {
    switch (b) {
    case Boundary::DramGb: return "dram<->gb";
    case Boundary::GbInBuf: return "gb<->in_buf";
    case Boundary::GbWtBuf: return "gb<->wt_buf";
    case Boundary::GbAcc: return "gb<->acc";
    case Boundary::InBufPe: return "in_buf<->pe";
    case Boundary::WtBufPe: return "wt_buf<->pe";
    }
    return "?";
}

AccessCounts& AccessCounts::operator+=(const AccessCounts& o) {
    for (size_t b = 0; b < bits.size(); ++b)
        for (size_t k = 0; k < bits[b].size(); ++k)
            for (size_t d = 0; d < 2; ++d) bits[b][k][d] += o.bits[b][k][d];
    return *this;
}

std::string AccessCounts::diff_string(const AccessCounts& o) const {
    std::ostringstream os;
    static const OperandKind kinds[] = {
        OperandKind::Weight, OperandKind::InputFeature, OperandKind::OutputFeature,
        OperandKind::AccumulatorState, OperandKind::AuxState};
    for (int b = 0; b < kNumBoundaries; ++b)
        for (OperandKind k : kinds)
            for (int d = 0; d < 2; ++d) {
                Bits a = bits[b][size_t(k)][d];
                Bits x = o.bits[b][size_t(k)][d];
                if (a != x)
                    os << to_string(Boundary(b)) << " " << stems::to_string(k)
                       << (d == 0 ? " toward" : " away") << ": " << a << " vs " << x
                       << "\n";
            }
    return os.str();
}

std::string LoopNest::to_string() const {
    std::ostringstream os;
    os << "[u k" << u_k << " oy" << u_oy << " ox" << u_ox << "]";
    for (const auto& l : loops) os << " " << stems::to_string(l.axis) << l.bound;
    if (state_home == StateHome::GlobalBuf) os << " s@gb";
    if (state_home == StateHome::DramStream) os << " s@dram";
    if (weights_from_dram) os << " w@dram";
    if (inputs_from_dram) os << " i@dram";
    if (output_to_dram) os << " o@dram";
    return os.str();
}

int64_t TileShape::dim(Axis a) const {
    switch (a) {
    case Axis::T: return t;
    case Axis::K: return k;
    case Axis::C: return c;
    case Axis::OY: return oy;
    case Axis::OX: return ox;
    case Axis::FY: return fy;
    case Axis::FX: return fx;
    }
    return 1;
}

uint64_t TileShape::op_count() const {
    uint64_t outs = uint64_t(t) * k * oy * ox;
    uint64_t red = 1;
    if (op_class == OpClass::Conv2D || op_class == OpClass::Pointwise)
        red = uint64_t(c) * fy * fx;
    else if (op_class == OpClass::MaxPool)
        red = uint64_t(fy) * fx;
    else if (op_class == OpClass::InputSource)
        return 0;
    return outs * red;
}

Bits TileShape::weight_tensor_bits() const {
    if (op_class != OpClass::Conv2D && op_class != OpClass::Pointwise) return 0;
    return Bits(k) * c * fy * fx * workload::kWeightBits;
}

Bits TileShape::out_tensor_bits() const {
    return Bits(t) * k * oy * ox * out_precision;
}

Bits TileShape::state_stripe_bits() const {
    if (!stateful) return 0;
    return Bits(k) * oy * ox * workload::kStateBits;
}

TileShape tile_shape(const workload::WorkloadGraph& w,
                     const tilegraph::ComputationTile& tile) {
    const auto& op = w.nodes[tile.id.op];
    TileShape s;
    s.op_class = op.op_class;
    s.t = tile.t_range.size();
    s.k = op.out_channels;
    s.c = op.has_weights() ? op.in_channels : 1;
    s.oy = tile.out_rows.size();
    s.ox = op.out_x;
    s.fy = op.projection.kernel_y;
    s.fx = op.projection.kernel_x;
    s.stride_y = op.projection.stride_y;
    s.stride_x = op.projection.stride_x;
    s.stateful = op.stateful;
    s.sop = tile.sop;
    s.out_precision = op.out_precision;
    s.num_input_operands = 0;
    for (const auto& o : op.operands)
        if (o.kind == OperandKind::InputFeature) {
            s.in_precision = o.precision;
            ++s.num_input_operands;
        }
    if (s.num_input_operands == 0) s.num_input_operands = 1;
    s.first_t = tile.t_range.lo == 0;
    s.last_t = tile.t_range.hi == w.total_timesteps;
    s.in_tensor_bits = tile.input_bits;
    return s;
}

// ---------------------------------------------------------------------------
// Nest analysis

namespace {

inline bool is_reduction(Axis a) { return a == Axis::C || a == Axis::FY || a == Axis::FX; }
inline bool is_out_spatial(Axis a) { return a == Axis::K || a == Axis::OY || a == Axis::OX; }

struct NestView {
    const LoopNest* nest;
    const TileShape* shape;
    int n;

    int64_t unroll(Axis a) const {
        switch (a) {
        case Axis::K: return nest->u_k;
        case Axis::OY: return nest->u_oy;
        case Axis::OX: return nest->u_ox;
        default: return 1;
        }
    }
    // product of bounds of a-loops below depth d, times unroll
    int64_t ext(Axis a, int d) const {
        int64_t e = unroll(a);
        for (int i = 0; i < d; ++i)
            if (nest->loops[i].axis == a) e *= nest->loops[i].bound;
        return e;
    }
    bool input_relevant(Axis a) const {
        if (shape->op_class == OpClass::Conv2D || shape->op_class == OpClass::Pointwise)
            return a != Axis::K;
        return a != Axis::C;  // elementwise/pool inputs are indexed by K
    }
    static bool weight_relevant(Axis a) {
        return a == Axis::K || a == Axis::C || a == Axis::FY || a == Axis::FX;
    }
    // sliding-window input region, unclamped
    int64_t input_region_elems(int d) const {
        Axis chan = (shape->op_class == OpClass::Conv2D ||
                     shape->op_class == OpClass::Pointwise)
                        ? Axis::C
                        : Axis::K;
        int64_t win_y = (ext(Axis::OY, d) - 1) * shape->stride_y + ext(Axis::FY, d);
        int64_t win_x = (ext(Axis::OX, d) - 1) * shape->stride_x + ext(Axis::FX, d);
        return ext(chan, d) * ext(Axis::T, d) * win_y * win_x;
    }
    int64_t weight_region_elems(int d) const {
        return ext(Axis::K, d) * ext(Axis::C, d) * ext(Axis::FY, d) * ext(Axis::FX, d);
    }
    // refills: product of all bounds at or above the lowest relevant loop >= d
    template <typename Pred>
    int64_t refills(int d, Pred relevant) const {
        int lowest = -1;
        for (int i = d; i < n; ++i)
            if (relevant(nest->loops[i].axis)) {
                lowest = i;
                break;
            }
        if (lowest < 0) return 1;
        int64_t r = 1;
        for (int i = lowest; i < n; ++i) r *= nest->loops[i].bound;
        return r;
    }
    // psum interruptions per output element: reduction loops with an
    // output-relevant temporal loop below them
    int64_t psum_visits() const {
        int64_t v = 1;
        bool out_seen = false;
        for (int i = 0; i < n; ++i) {
            Axis a = nest->loops[i].axis;
            if (is_out_spatial(a) || a == Axis::T) out_seen = true;
            else if (is_reduction(a) && out_seen) v *= nest->loops[i].bound;
        }
        return v;
    }
    // consecutive timesteps per accumulator occupancy
    int64_t t_adjacent() const {
        int64_t ta = 1;
        for (int i = 0; i < n; ++i) {
            Axis a = nest->loops[i].axis;
            if (is_out_spatial(a)) return ta;
            if (a == Axis::T) ta *= nest->loops[i].bound;
        }
        return ta;
    }
    Bits psum_park_alloc() const {
        int top_red = -1;
        bool out_below = false;
        for (int i = 0; i < n; ++i) {
            Axis a = nest->loops[i].axis;
            if (is_reduction(a)) {
                bool seen_out = false;
                for (int j = 0; j < i; ++j)
                    if (is_out_spatial(nest->loops[j].axis) ||
                        nest->loops[j].axis == Axis::T)
                        seen_out = true;
                if (seen_out) top_red = i;
            }
            (void)out_below;
        }
        if (top_red < 0) return 0;
        int64_t outs = ext(Axis::K, top_red) * ext(Axis::OY, top_red) *
                       ext(Axis::OX, top_red) * ext(Axis::T, top_red);
        return Bits(outs) * workload::kAccumulatorBits;
    }
};

}  // namespace

AccessCounts access_counts(const LoopNest& nest, const TileShape& shape) {
    AccessCounts ac;
    if (shape.op_class == OpClass::InputSource) return ac;
    NestView v{&nest, &shape, int(nest.loops.size())};

    uint64_t ops = shape.op_count();
    uint64_t out_elems = uint64_t(shape.t) * shape.k * shape.oy * shape.ox;
    bool has_w = shape.op_class == OpClass::Conv2D || shape.op_class == OpClass::Pointwise;

    // input features
    {
        Bits region = Bits(v.input_region_elems(nest.in_depth)) * shape.in_precision;
        Bits moved = region * v.refills(nest.in_depth,
                                        [&](Axis a) { return v.input_relevant(a); }) *
                     shape.num_input_operands;
        ac.at(Boundary::GbInBuf, OperandKind::InputFeature, Dir::Toward) += moved;
        if (nest.inputs_from_dram)
            ac.at(Boundary::DramGb, OperandKind::InputFeature, Dir::Toward) += moved;
        uint64_t pe_reads = ops * shape.num_input_operands;
        if (has_w) pe_reads /= nest.u_k;  // broadcast across output channels
        ac.at(Boundary::InBufPe, OperandKind::InputFeature, Dir::Toward) +=
            pe_reads * shape.in_precision;
    }

    // weights
    if (has_w) {
        Bits region = Bits(v.weight_region_elems(nest.wt_depth)) * workload::kWeightBits;
        Bits moved = region * v.refills(nest.wt_depth, NestView::weight_relevant);
        ac.at(Boundary::GbWtBuf, OperandKind::Weight, Dir::Toward) += moved;
        if (nest.weights_from_dram)
            ac.at(Boundary::DramGb, OperandKind::Weight, Dir::Toward) += moved;
        ac.at(Boundary::WtBufPe, OperandKind::Weight, Dir::Toward) +=
            ops / (uint64_t(nest.u_oy) * nest.u_ox) * workload::kWeightBits;
    }

    // outputs: written once per (neuron, timestep) after activation
    {
        Bits moved = Bits(out_elems) * shape.out_precision;
        ac.at(Boundary::GbAcc, OperandKind::OutputFeature, Dir::Away) += moved;
        if (nest.output_to_dram)
            ac.at(Boundary::DramGb, OperandKind::OutputFeature, Dir::Away) += moved;
    }

    // partial-sum spills (stateless reductions interrupted by output loops)
    if (!shape.stateful) {
        int64_t visits = v.psum_visits();
        if (visits > 1) {
            Bits spill = Bits(out_elems) * (visits - 1) * workload::kAccumulatorBits;
            ac.at(Boundary::GbAcc, OperandKind::OutputFeature, Dir::Away) += spill;
            ac.at(Boundary::GbAcc, OperandKind::OutputFeature, Dir::Toward) += spill;
        }
    }

    // neuron state: read/written once per (neuron, timestep) at its parking
    // level; adjacent timesteps in the accumulator elide the round trip;
    // zero-initialized at t=0 and discarded after the final timestep
    if (shape.stateful) {
        uint64_t neurons = uint64_t(shape.k) * shape.oy * shape.ox;
        int64_t t_adj = v.t_adjacent();
        uint64_t parks = uint64_t(shape.t / t_adj) - 1;
        uint64_t loads = parks + (shape.first_t ? 0 : 1);
        uint64_t stores = parks + (shape.last_t ? 0 : 1);
        Bits rd = Bits(neurons) * loads * workload::kStateBits;
        Bits wr = Bits(neurons) * stores * workload::kStateBits;
        ac.at(Boundary::GbAcc, OperandKind::AccumulatorState, Dir::Toward) += rd;
        ac.at(Boundary::GbAcc, OperandKind::AccumulatorState, Dir::Away) += wr;
        if (nest.state_home == StateHome::DramStream) {
            ac.at(Boundary::DramGb, OperandKind::AccumulatorState, Dir::Toward) += rd;
            ac.at(Boundary::DramGb, OperandKind::AccumulatorState, Dir::Away) += wr;
        }
    }
    return ac;
}

// ---------------------------------------------------------------------------
// Cost model

MappingCost estimate_cost(const LoopNest& nest, const TileShape& shape,
                          const accel::Core& core,
                          const accel::MemoryLevel& dram) {
    MappingCost mc;
    mc.nest = nest;
    mc.counts = access_counts(nest, shape);
    const auto& gb = core.level(accel::LevelId::GlobalBuf);
    const auto& ib = core.level(accel::LevelId::InputBuf);
    const auto& wb = core.level(accel::LevelId::WeightBuf);

    auto add = [&](Component c, OperandGroup g, EnergyFj e) {
        mc.bd(c, g) += e;
        mc.energy += e;
    };
    auto counts_of = [&](Boundary b, OperandKind k, Dir d) {
        return EnergyFj(mc.counts.get(b, k, d));
    };

    static const OperandKind kinds[] = {
        OperandKind::Weight, OperandKind::InputFeature, OperandKind::OutputFeature,
        OperandKind::AccumulatorState, OperandKind::AuxState};
    for (OperandKind k : kinds) {
        OperandGroup g = group_of(k);
        // DRAM <-> GB (streamed operands): transit charged on both sides
        add(Component::Dram, g, counts_of(Boundary::DramGb, k, Dir::Toward) * dram.energy_rd);
        add(Component::GlobalSram, g,
            counts_of(Boundary::DramGb, k, Dir::Toward) * gb.energy_wr);
        add(Component::GlobalSram, g,
            counts_of(Boundary::DramGb, k, Dir::Away) * gb.energy_rd);
        add(Component::Dram, g, counts_of(Boundary::DramGb, k, Dir::Away) * dram.energy_wr);
        // GB -> local buffers
        add(Component::GlobalSram, g,
            counts_of(Boundary::GbInBuf, k, Dir::Toward) * gb.energy_rd);
        add(Component::LocalBuffer, g,
            counts_of(Boundary::GbInBuf, k, Dir::Toward) * ib.energy_wr);
        add(Component::GlobalSram, g,
            counts_of(Boundary::GbWtBuf, k, Dir::Toward) * gb.energy_rd);
        add(Component::LocalBuffer, g,
            counts_of(Boundary::GbWtBuf, k, Dir::Toward) * wb.energy_wr);
        // local buffers -> PE
        add(Component::LocalBuffer, g,
            counts_of(Boundary::InBufPe, k, Dir::Toward) * ib.energy_rd);
        add(Component::LocalBuffer, g,
            counts_of(Boundary::WtBufPe, k, Dir::Toward) * wb.energy_rd);
        // accumulators <-> GB, charged at global-buffer energy only
        add(Component::GlobalSram, g, counts_of(Boundary::GbAcc, k, Dir::Away) * gb.energy_wr);
        add(Component::GlobalSram, g,
            counts_of(Boundary::GbAcc, k, Dir::Toward) * gb.energy_rd);
    }

    uint64_t ops = shape.op_count();
    add(Component::Pe, OperandGroup::Feature,
        EnergyFj(ops) * (shape.sop ? core.pe.energy_sop : core.pe.energy_mac));

    // latency: compute vs per-boundary transfer time under double buffering
    int64_t u = nest.unrolled();
    mc.compute_cycles = u > 0 ? (ops + u - 1) / u : ops;
    auto bdir = [&](Boundary b, Dir d) {
        Bits total = 0;
        for (OperandKind k : kinds) total += mc.counts.get(b, k, d);
        return total;
    };
    auto cyc = [](Bits bits, uint64_t bw) -> Cycles {
        return bw == 0 ? 0 : (bits + bw - 1) / bw;
    };
    Cycles worst = 0;
    worst = std::max(worst, cyc(bdir(Boundary::DramGb, Dir::Toward), dram.bw_rd) +
                                cyc(bdir(Boundary::DramGb, Dir::Away), dram.bw_wr));
    worst = std::max(worst,
                     cyc(bdir(Boundary::GbInBuf, Dir::Toward), std::min(gb.bw_rd, ib.bw_wr)));
    worst = std::max(worst,
                     cyc(bdir(Boundary::GbWtBuf, Dir::Toward), std::min(gb.bw_rd, wb.bw_wr)));
    worst = std::max(worst, cyc(bdir(Boundary::GbAcc, Dir::Away), gb.bw_wr) +
                                cyc(bdir(Boundary::GbAcc, Dir::Toward), gb.bw_rd));
    worst = std::max(worst, cyc(bdir(Boundary::InBufPe, Dir::Toward), ib.bw_rd));
    worst = std::max(worst, cyc(bdir(Boundary::WtBufPe, Dir::Toward), wb.bw_rd));
    mc.latency = std::max(mc.compute_cycles, worst);
    mc.memory_bound = worst > mc.compute_cycles;

    // allocations
    NestView v{&nest, &shape, int(nest.loops.size())};
    bool has_w = shape.op_class == OpClass::Conv2D || shape.op_class == OpClass::Pointwise;
    mc.alloc.in_buf = Bits(v.input_region_elems(nest.in_depth)) * shape.in_precision *
                      shape.num_input_operands;
    mc.alloc.wt_buf = has_w
        ? Bits(v.weight_region_elems(nest.wt_depth)) * workload::kWeightBits : 0;
    Bits gb_sum = 0;
    if (!nest.inputs_from_dram) gb_sum += shape.in_tensor_bits;
    if (has_w && !nest.weights_from_dram) gb_sum += shape.weight_tensor_bits();
    if (!nest.output_to_dram) gb_sum += shape.out_tensor_bits();
    if (nest.state_home == StateHome::GlobalBuf) gb_sum += shape.state_stripe_bits();
    if (!shape.stateful) gb_sum += v.psum_park_alloc() > 0 && v.psum_visits() > 1
                                       ? v.psum_park_alloc() : 0;
    mc.alloc.gb = gb_sum;
    mc.valid = mc.alloc.in_buf <= ib.capacity && mc.alloc.wt_buf <= wb.capacity &&
               mc.alloc.gb <= gb.capacity;
    return mc;
}

// ---------------------------------------------------------------------------
// Enumeration

namespace {

std::vector<int64_t> divisors_of(int64_t n) {
    std::vector<int64_t> out;
    for (int64_t d = 1; d * d <= n; ++d)
        if (n % d == 0) {
            out.push_back(d);
            if (d != n / d) out.push_back(n / d);
        }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int64_t> capped_divisors(int64_t n, size_t cap) {
    auto all = divisors_of(n);
    if (all.size() <= cap) return all;
    std::vector<int64_t> out;
    for (size_t i = 0; i < cap; ++i) {
        size_t idx = i * (all.size() - 1) / (cap - 1);
        if (out.empty() || out.back() != all[idx]) out.push_back(all[idx]);
    }
    return out;
}

struct Residues {
    int64_t t, k, c, oy, ox, fy, fx;
    int64_t of(Axis a) const {
        switch (a) {
        case Axis::T: return t;
        case Axis::K: return k;
        case Axis::C: return c;
        case Axis::OY: return oy;
        case Axis::OX: return ox;
        case Axis::FY: return fy;
        case Axis::FX: return fx;
        }
        return 1;
    }
};

constexpr Axis kAllAxes[] = {Axis::FX, Axis::FY, Axis::C, Axis::T,
                             Axis::OX, Axis::OY, Axis::K};

size_t total_prime_count(const Residues& r) {
    size_t n = 0;
    for (Axis a : kAllAxes) n += prime_factorize(r.of(a)).size();
    return n;
}

// Exhaustive permutation generator. Adjacent same-axis loops are kept in
// ascending bound order (the swapped variants carry equal traffic with a
// larger or equal footprint). For stateful operators all reduction loops are
// placed innermost so that the state update of one (neuron, timestep)
// completes within a single accumulator occupancy.
void gen_permutations(const Residues& r, bool stateful,
                      const std::function<void(const std::vector<Loop>&)>& emit) {
    std::vector<Loop> pool;
    for (Axis a : kAllAxes)
        for (int64_t p : prime_factorize(r.of(a))) pool.push_back({a, p});

    std::vector<Loop> seq;
    std::vector<bool> used(pool.size(), false);

    auto reduction_pending = [&]() {
        for (size_t i = 0; i < pool.size(); ++i)
            if (!used[i] && is_reduction(pool[i].axis)) return true;
        return false;
    };

    std::function<void()> rec = [&]() {
        if (seq.size() == pool.size()) {
            emit(seq);
            return;
        }
        std::set<std::pair<int, int64_t>> tried;
        for (size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            if (stateful && !is_reduction(pool[i].axis) && reduction_pending())
                continue;
            if (!tried.insert({int(pool[i].axis), pool[i].bound}).second) continue;
            if (!seq.empty() && seq.back().axis == pool[i].axis &&
                pool[i].bound < seq.back().bound)
                continue;  // canonical ascending order within same-axis runs
            used[i] = true;
            seq.push_back(pool[i]);
            rec();
            seq.pop_back();
            used[i] = false;
        }
    };
    rec();
}

// Structured generator for large tiles: reductions innermost, then an inner
// time loop, then permutations of inner/outer channel-spatial splits with the
// remaining time factor outermost among them.
void gen_template(const Residues& r,
                  const std::function<void(const std::vector<Loop>&)>& emit) {
    auto tdiv = capped_divisors(r.t, 6);
    auto kdiv = capped_divisors(r.k, 6);
    auto oydiv = capped_divisors(r.oy, 6);
    auto oxdiv = capped_divisors(r.ox, 6);

    std::vector<Loop> base;
    if (r.fx > 1) base.push_back({Axis::FX, r.fx});
    if (r.fy > 1) base.push_back({Axis::FY, r.fy});
    if (r.c > 1) base.push_back({Axis::C, r.c});

    static const std::array<std::array<Axis, 3>, 6> perms3 = {{
        {Axis::K, Axis::OY, Axis::OX}, {Axis::K, Axis::OX, Axis::OY},
        {Axis::OY, Axis::K, Axis::OX}, {Axis::OY, Axis::OX, Axis::K},
        {Axis::OX, Axis::K, Axis::OY}, {Axis::OX, Axis::OY, Axis::K},
    }};
    static const std::array<std::array<Axis, 4>, 12> perms4 = {{
        {Axis::T, Axis::K, Axis::OY, Axis::OX}, {Axis::K, Axis::T, Axis::OY, Axis::OX},
        {Axis::K, Axis::OY, Axis::T, Axis::OX}, {Axis::K, Axis::OY, Axis::OX, Axis::T},
        {Axis::T, Axis::OY, Axis::K, Axis::OX}, {Axis::OY, Axis::T, Axis::K, Axis::OX},
        {Axis::OY, Axis::K, Axis::T, Axis::OX}, {Axis::OY, Axis::K, Axis::OX, Axis::T},
        {Axis::OY, Axis::OX, Axis::K, Axis::T}, {Axis::T, Axis::OY, Axis::OX, Axis::K},
        {Axis::OY, Axis::T, Axis::OX, Axis::K}, {Axis::OY, Axis::OX, Axis::T, Axis::K},
    }};

    std::vector<Loop> seq;
    for (int64_t t1 : tdiv)
        for (int64_t k1 : kdiv)
            for (int64_t oy1 : oydiv)
                for (int64_t ox1 : oxdiv)
                    for (const auto& p2 : perms3)
                        for (const auto& p4 : perms4) {
                            seq = base;
                            if (t1 > 1) seq.push_back({Axis::T, t1});
                            auto inner_of = [&](Axis a) -> int64_t {
                                if (a == Axis::K) return k1;
                                if (a == Axis::OY) return oy1;
                                return ox1;
                            };
                            for (Axis a : p2)
                                if (inner_of(a) > 1) seq.push_back({a, inner_of(a)});
                            for (Axis a : p4) {
                                int64_t rest = 1;
                                if (a == Axis::T) rest = r.t / t1;
                                else if (a == Axis::K) rest = r.k / k1;
                                else if (a == Axis::OY) rest = r.oy / oy1;
                                else if (a == Axis::OX) rest = r.ox / ox1;
                                if (rest > 1) seq.push_back({a, rest});
                            }
                            emit(seq);
                        }
}

struct NestHash {
    size_t operator()(const LoopNest& n) const {
        size_t h = std::hash<int64_t>()(n.u_k * 131 + n.u_oy * 17 + n.u_ox);
        for (const auto& l : n.loops)
            h = h * 1000003 + size_t(l.axis) * 97 + size_t(l.bound);
        h = h * 31 + size_t(n.state_home) * 7 + n.output_to_dram * 2 +
            n.weights_from_dram * 3 + n.inputs_from_dram * 5;
        return h;
    }
};

int64_t max_divisor_leq(int64_t n, int64_t cap) {
    int64_t best = 1;
    for (int64_t d = 1; d <= cap; ++d)
        if (n % d == 0) best = d;
    return best;
}

}  // namespace

void enumerate_mappings(const TileShape& shape, const accel::Core& core,
                        bool allow_dram,
                        const std::function<void(const LoopNest&)>& yield) {
    if (shape.op_class == OpClass::InputSource) return;

    const auto& gb = core.level(accel::LevelId::GlobalBuf);
    const auto& ib = core.level(accel::LevelId::InputBuf);
    const auto& wb = core.level(accel::LevelId::WeightBuf);
    bool has_w = shape.op_class == OpClass::Conv2D || shape.op_class == OpClass::Pointwise;

    std::unordered_set<LoopNest, NestHash> seen;

    // output channel unroll candidates (under-unrolling trades idle columns
    // for a weight working set that covers the whole reduction)
    std::vector<int64_t> uks;
    for (int64_t d : divisors_of(shape.k))
        if (d <= core.pe.cols) uks.push_back(d);
    std::sort(uks.rbegin(), uks.rend());
    if (uks.size() > 4) uks.resize(4);

    for (int64_t u_k : uks) {
        int64_t u_oy = max_divisor_leq(shape.oy, core.pe.rows);
        int64_t u_ox = max_divisor_leq(shape.ox, core.pe.rows / u_oy);
        Residues res{shape.t, shape.k / u_k, shape.c, shape.oy / u_oy,
                     shape.ox / u_ox, shape.fy, shape.fx};

        auto assemble = [&](const std::vector<Loop>& loops) {
            LoopNest nest;
            nest.loops = loops;
            nest.u_k = u_k;
            nest.u_oy = u_oy;
            nest.u_ox = u_ox;
            int n = int(loops.size());
            NestView v{&nest, &shape, n};

            // deepest residency that fits each private buffer
            nest.in_depth = 0;
            for (int d = 0; d <= n; ++d) {
                Bits need = Bits(v.input_region_elems(d)) * shape.in_precision *
                            shape.num_input_operands;
                if (need <= ib.capacity) nest.in_depth = d;
            }
            nest.wt_depth = 0;
            if (has_w) {
                for (int d = 0; d <= n; ++d) {
                    Bits need = Bits(v.weight_region_elems(d)) * workload::kWeightBits;
                    if (need <= wb.capacity) nest.wt_depth = d;
                }
            }

            // state parking requirement
            bool state_traffic = false;
            if (shape.stateful) {
                int64_t parks = shape.t / v.t_adjacent() - 1;
                state_traffic = parks > 0 || !shape.first_t || !shape.last_t;
            }

            Bits in_t = shape.in_tensor_bits;
            Bits wt_t = shape.weight_tensor_bits();
            Bits out_t = shape.out_tensor_bits();
            Bits stripe = state_traffic ? shape.state_stripe_bits() : 0;
            Bits psum = !shape.stateful && v.psum_visits() > 1 ? v.psum_park_alloc() : 0;

            auto emit_variant = [&](bool i_dram, bool w_dram, bool o_dram, bool s_dram) {
                LoopNest cand = nest;
                cand.inputs_from_dram = i_dram;
                cand.weights_from_dram = has_w && w_dram;
                cand.output_to_dram = o_dram;
                cand.state_home = !state_traffic ? StateHome::None
                                  : s_dram ? StateHome::DramStream
                                           : StateHome::GlobalBuf;
                Bits gb_sum = psum;
                if (!i_dram) gb_sum += in_t;
                if (has_w && !w_dram) gb_sum += wt_t;
                if (!o_dram) gb_sum += out_t;
                if (cand.state_home == StateHome::GlobalBuf) gb_sum += stripe;
                if (gb_sum > gb.capacity) return;
                if (seen.insert(cand).second) yield(cand);
            };

            if (in_t + wt_t + out_t + stripe + psum <= gb.capacity) {
                emit_variant(false, false, false, false);
            } else if (allow_dram) {
                for (int mask = 1; mask < 16; ++mask)
                    emit_variant(mask & 1, mask & 2, mask & 4, mask & 8);
            }
        };

        if (total_prime_count(res) <= 8)
            gen_permutations(res, shape.stateful, assemble);
        else
            gen_template(res, assemble);
    }
}

// ---------------------------------------------------------------------------
// Memoized search

namespace {
std::atomic<uint64_t> g_enumerated{0};
}

const MappingCost& Mapper::search(const TileShape& shape, int core_id, bool dram) {
    auto key = std::make_tuple(shape, core_id, dram);
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            ++stats_.cache_hits;
            return it->second;
        }
        ++stats_.cache_misses;
    }

    const accel::Core& core = acc_->core(core_id);
    MappingCost best;
    uint64_t n_enum = 0;
    enumerate_mappings(shape, core, dram, [&](const LoopNest& nest) {
        ++n_enum;
        MappingCost mc = estimate_cost(nest, shape, core, acc_->dram);
        if (!mc.valid) return;
        if (!best.valid || mc.energy < best.energy ||
            (mc.energy == best.energy &&
             (mc.latency < best.latency ||
              (mc.latency == best.latency && mc.nest.loops < best.nest.loops)))) {
            best = mc;
        }
    });
    g_enumerated += n_enum;

    std::lock_guard<std::mutex> lk(mu_);
    stats_.enumerated = g_enumerated.load();
    auto [it, inserted] = cache_.emplace(key, std::move(best));
    return it->second;
}

const MappingCost& Mapper::best_mapping(const TileShape& shape, int core_id) {
    const MappingCost& resident = search(shape, core_id, false);
    if (resident.valid) return resident;
    return search(shape, core_id, true);
}

const MappingCost& Mapper::best_mapping_dram(const TileShape& shape, int core_id) {
    return search(shape, core_id, true);
}

SearchStats Mapper::stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    SearchStats s = stats_;
    s.enumerated = g_enumerated.load();
    return s;
}

}  // namespace stems::intramap
