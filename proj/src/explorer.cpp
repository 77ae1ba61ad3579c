#include "stems/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

namespace stems::explorer {

using tilegraph::CutSpec;
using workload::WorkloadGraph;

BlockRanking rank_blocks(const WorkloadGraph& w, std::optional<bool> batch_from_output) {
    BlockRanking r;
    int n = w.num_blocks();
    for (int b = 0; b < n; ++b) r.fusion_order.push_back(b);

    bool first_block_stateless = true;
    for (const auto& node : w.nodes)
        if (node.block_id == 0 && node.stateful) first_block_stateless = false;
    // hybrid models (stateless front end) reuse memory from the output side
    r.batch_from_output = batch_from_output.value_or(first_block_stateless);
    for (int b = 0; b < n; ++b)
        r.batch_order.push_back(r.batch_from_output ? n - 1 - b : b);
    return r;
}

CutSpec cuts_for_point(const WorkloadGraph& w, const BlockRanking& ranking, int f,
                       int b) {
    int n = w.num_blocks();
    // per-block fused band count: one band per output row of the last operator
    std::vector<int64_t> last_oy(n, 1);
    for (const auto& node : w.nodes) last_oy[node.block_id] = node.out_y;

    CutSpec cuts;
    for (int blk = 0; blk < n; ++blk) cuts.blocks[blk] = {1, 1};
    for (int i = 0; i < f && i < n; ++i)
        cuts.blocks[ranking.fusion_order[i]].spatial_cut = last_oy[ranking.fusion_order[i]];
    for (int i = 0; i < b && i < n; ++i)
        cuts.blocks[ranking.batch_order[i]].temporal_cut = w.total_timesteps;
    return cuts;
}

const HybridPoint& GridResult::at(int f, int b) const {
    return points.at(size_t(f) * (n_blocks + 1) + b);
}

const HybridPoint& GridResult::best() const {
    const HybridPoint* best = nullptr;
    for (const auto& p : points) {
        if (!p.summary.feasible) continue;
        if (!best || p.summary.dram_energy < best->summary.dram_energy) best = &p;
    }
    if (!best) throw ModelError("no feasible grid point");
    return *best;
}

std::string GridResult::heatmap_csv(int what) const {
    std::ostringstream os;
    os << "n_fused\\n_batched";
    for (int b = 0; b <= n_blocks; ++b) os << "," << b;
    os << "\n";
    for (int f = 0; f <= n_blocks; ++f) {
        os << f;
        for (int b = 0; b <= n_blocks; ++b) {
            const auto& p = at(f, b);
            os << ",";
            if (!p.summary.feasible) {
                os << "inf";
            } else if (what == 2) {
                os << p.summary.latency;
            } else {
                EnergyFj e = what == 0 ? p.summary.dram_energy : p.summary.total_energy;
                char buf[64];
                snprintf(buf, sizeof buf, "%.9f", double(e) * 1e-12);  // fJ -> mJ
                os << buf;
            }
        }
        os << "\n";
    }
    return os.str();
}

static PointSummary evaluate_point(const WorkloadGraph& w,
                                   const accel::AcceleratorModel& acc,
                                   intramap::Mapper& mapper, const CutSpec& cuts,
                                   const std::map<int, int>& alloc = {}) {
    PointSummary s;
    try {
        auto tg = tilegraph::generate_tile_graph(w, cuts);
        auto res = scheduler::schedule(tg, acc, mapper, alloc);
        s.feasible = true;
        s.total_energy = res.energy.total;
        s.latency = res.latency;
        s.dram_bits = res.dram_bits;
        for (int g = 0; g < kNumOperandGroups; ++g)
            s.dram_energy += res.energy.cells[size_t(accel::Component::Dram)][g];
    } catch (const ModelError&) {
        s.feasible = false;
    }
    return s;
}

GridResult hybrid_grid_explore(const WorkloadGraph& w,
                               const accel::AcceleratorModel& acc,
                               std::optional<bool> batch_from_output, int jobs) {
    GridResult grid;
    grid.n_blocks = w.num_blocks();
    grid.ranking = rank_blocks(w, batch_from_output);
    int side = grid.n_blocks + 1;
    grid.points.resize(size_t(side) * side);
    for (int f = 0; f < side; ++f)
        for (int b = 0; b < side; ++b) {
            auto& p = grid.points[size_t(f) * side + b];
            p.n_fused = f;
            p.n_batched = b;
            p.cuts = cuts_for_point(w, grid.ranking, f, b);
        }

    intramap::Mapper mapper(acc);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= grid.points.size()) return;
            grid.points[i].summary =
                evaluate_point(w, acc, mapper, grid.points[i].cuts);
        }
    };
    jobs = std::max(1, jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return grid;
}

std::vector<SweepRow> time_batch_sweep(const WorkloadGraph& w,
                                       const accel::AcceleratorModel& acc,
                                       const std::vector<int64_t>& factors) {
    intramap::Mapper mapper(acc);
    std::vector<SweepRow> rows;
    for (int64_t f : factors) {
        int64_t factor = std::clamp<int64_t>(f, 1, w.total_timesteps);
        CutSpec cuts;
        for (int b = 0; b < w.num_blocks(); ++b) cuts.blocks[b] = {1, factor};
        SweepRow row;
        row.factor = factor;
        auto tg = tilegraph::generate_tile_graph(w, cuts);
        auto res = scheduler::schedule(tg, acc, mapper);
        row.dram_bits = res.dram_bits;
        row.dram_bits_by_group = res.dram_bits_by_group;
        row.total_energy = res.energy.total;
        for (int g = 0; g < kNumOperandGroups; ++g)
            row.dram_energy += res.energy.cells[size_t(accel::Component::Dram)][g];
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Genetic allocation search

namespace {

double fitness_of(const PointSummary& s, double lambda) {
    if (!s.feasible) return 1e300;
    return double(s.total_energy) + lambda * double(s.latency);
}

}  // namespace

GaResult ga_allocate(const WorkloadGraph& w, const accel::AcceleratorModel& acc,
                     const CutSpec& cuts, const GaConfig& cfg) {
    intramap::Mapper mapper(acc);
    int n_cores = int(acc.cores.size());
    std::vector<int> op_ids;
    for (const auto& n : w.nodes) op_ids.push_back(n.id);
    int genes = int(op_ids.size());

    auto to_alloc = [&](const std::vector<int>& g) {
        std::map<int, int> a;
        for (int i = 0; i < genes; ++i) a[op_ids[i]] = g[i];
        return a;
    };

    GaResult result;
    if (n_cores < 2) {
        std::vector<int> ident(genes, 0);
        result.allocation = to_alloc(ident);
        result.summary = evaluate_point(w, acc, mapper, cuts, result.allocation);
        result.fitness = fitness_of(result.summary, 0.0);
        return result;
    }

    // lambda makes energy and latency commensurate on the all-on-core-0 point
    std::vector<int> base(genes, 0);
    PointSummary base_sum = evaluate_point(w, acc, mapper, cuts, to_alloc(base));
    double lambda = base_sum.feasible && base_sum.latency > 0
                        ? double(base_sum.total_energy) / double(base_sum.latency)
                        : 1.0;

    std::mt19937_64 rng(cfg.seed);
    double mut = cfg.mutation_rate > 0 ? cfg.mutation_rate : 1.0 / genes;

    struct Indiv {
        std::vector<int> g;
        double fit;
        PointSummary sum;
    };
    auto eval = [&](const std::vector<int>& g) {
        PointSummary s = evaluate_point(w, acc, mapper, cuts, to_alloc(g));
        return Indiv{g, fitness_of(s, lambda), s};
    };

    std::vector<Indiv> pop;
    pop.push_back(eval(base));
    std::uniform_int_distribution<int> core_dist(0, n_cores - 1);
    while (int(pop.size()) < cfg.population) {
        std::vector<int> g(genes);
        for (auto& x : g) x = core_dist(rng);
        pop.push_back(eval(g));
    }

    auto tournament = [&]() -> const Indiv& {
        std::uniform_int_distribution<int> pick(0, int(pop.size()) - 1);
        const Indiv& a = pop[pick(rng)];
        const Indiv& b = pop[pick(rng)];
        return a.fit <= b.fit ? a : b;
    };

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int gen = 0; gen < cfg.generations; ++gen) {
        std::vector<Indiv> next;
        // elitism: carry the best individual over
        const Indiv* best = &pop[0];
        for (const auto& i : pop)
            if (i.fit < best->fit) best = &i;
        next.push_back(*best);
        while (int(next.size()) < cfg.population) {
            std::vector<int> child = tournament().g;
            const auto& other = tournament().g;
            std::uniform_int_distribution<int> cut(1, genes - 1);
            int point = genes > 1 ? cut(rng) : 0;
            for (int i = point; i < genes; ++i) child[i] = other[i];
            for (int i = 0; i < genes; ++i)
                if (uni(rng) < mut) child[i] = core_dist(rng);
            next.push_back(eval(child));
        }
        pop = std::move(next);
    }

    const Indiv* best = &pop[0];
    for (const auto& i : pop)
        if (i.fit < best->fit) best = &i;
    result.allocation = to_alloc(best->g);
    result.summary = best->sum;
    result.fitness = best->fit;
    return result;
}

}  // namespace stems::explorer
