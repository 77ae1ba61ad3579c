#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "stems/explorer.hpp"
#include "stems/oracle.hpp"

namespace fs = std::filesystem;
using namespace stems;

namespace {

int g_verbosity = [] {
    const char* v = std::getenv("STEMS_LOG");
    return v ? std::atoi(v) : 0;
}();

void logv(int level, const std::string& msg) {
    if (g_verbosity >= level) std::cerr << "[stems] " << msg << "\n";
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p);
    f << content;
    logv(1, "wrote " + p.string());
}

struct RunConfig {
    std::string workload_path, builtin_name;
    std::string accel_path;
    uint64_t sram_kb = 128;
    std::string cuts_path, preset;
    int64_t fuse = 0, tbatch = 0;
    std::string factors = "1,2,4,8,16";
    uint64_t seed = 1;
    int jobs = 1;
    std::string out_dir = "out";
    bool stats = false;
    std::string batch_side = "auto";

    workload::WorkloadGraph load_workload() const {
        if (!builtin_name.empty() && !workload_path.empty())
            throw ParseError("give exactly one of --workload and --builtin");
        if (!builtin_name.empty()) return workload::builtin_benchmark(builtin_name);
        if (!workload_path.empty()) return workload::parse_workload(slurp(workload_path));
        throw ParseError("no workload given (use --workload or --builtin)");
    }
    accel::AcceleratorModel load_accel() const {
        if (!accel_path.empty()) return accel::parse_accelerator(slurp(accel_path));
        return accel::builtin_meta_vr(sram_kb * 1024);
    }
    tilegraph::CutSpec load_cuts(const workload::WorkloadGraph& w) const {
        if (!cuts_path.empty()) return tilegraph::parse_cuts(slurp(cuts_path));
        tilegraph::CutSpec cuts;
        std::vector<int64_t> last_oy(w.num_blocks(), 1);
        for (const auto& n : w.nodes) last_oy[n.block_id] = n.out_y;
        for (int b = 0; b < w.num_blocks(); ++b) {
            tilegraph::BlockCut c{1, 1};
            if (preset == "st-lbl") c = {1, 1};
            else if (preset == "tb-lbl") c = {1, w.total_timesteps};
            else if (preset == "st-lf") c = {last_oy[b], 1};
            else if (preset == "tb-lf") c = {last_oy[b], w.total_timesteps};
            else if (!preset.empty())
                throw ParseError("unknown preset '" + preset + "'");
            if (fuse > 0) c.spatial_cut = fuse;
            if (tbatch > 0) c.temporal_cut = tbatch;
            cuts.blocks[b] = c;
        }
        return cuts;
    }
    std::optional<bool> batching_direction() const {
        if (batch_side == "input") return false;
        if (batch_side == "output") return true;
        return std::nullopt;
    }
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--workload", cfg.workload_path, "workload JSON file");
    cmd->add_option("--builtin", cfg.builtin_name,
                    "builtin benchmark (sew_resnet18, sew_resnet152, red_lif, micro_<k>)");
    cmd->add_option("--accel", cfg.accel_path, "accelerator JSON file");
    cmd->add_option("--sram-kb", cfg.sram_kb, "global buffer KB for the builtin model");
    cmd->add_option("--cuts", cfg.cuts_path, "cuts JSON file");
    cmd->add_option("--fuse", cfg.fuse, "spatial cut (bands) for all blocks");
    cmd->add_option("--tbatch", cfg.tbatch, "temporal batch for all blocks");
    cmd->add_option("--preset", cfg.preset, "st-lbl | tb-lbl | st-lf | tb-lf");
    cmd->add_option("--factors", cfg.factors, "comma-separated batch factors");
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--jobs", cfg.jobs, "parallel evaluation threads");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--batch-side", cfg.batch_side, "input | output | auto");
    cmd->add_flag("--stats", cfg.stats, "print search statistics");
}

std::string trace_jsonl(const tilegraph::TileGraph& tg,
                        const scheduler::ScheduleResult& res) {
    std::ostringstream os;
    for (const auto& e : res.exec_trace)
        os << "{\"kind\":\"exec\",\"id\":\"" << tilegraph::to_string(tg.tiles[e.tile].id)
           << "\",\"core\":" << e.core << ",\"t0\":" << e.start << ",\"t1\":" << e.end
           << ",\"bits\":0}\n";
    for (const auto& x : res.xfer_trace)
        os << "{\"kind\":\"xfer\",\"id\":\"" << scheduler::to_string(x.tensor)
           << (x.writeback ? "\",\"dir\":\"wb" : "\",\"dir\":\"fetch")
           << "\",\"core\":" << x.core << ",\"t0\":" << x.start << ",\"t1\":" << x.end
           << ",\"bits\":" << x.bits << "}\n";
    return os.str();
}

void print_stats(const intramap::Mapper& mapper) {
    auto s = mapper.stats();
    std::cerr << "[stats] mappings enumerated: " << s.enumerated
              << ", cache hits: " << s.cache_hits << ", misses: " << s.cache_misses
              << "\n";
}

int cmd_cost(const RunConfig& cfg) {
    auto w = cfg.load_workload();
    auto acc = cfg.load_accel();
    auto cuts = cfg.load_cuts(w);
    auto tg = tilegraph::generate_tile_graph(w, cuts);
    intramap::Mapper mapper(acc);

    std::ostringstream csv, txt;
    csv << "layer,block,class,ops,sop,energy_fj,latency_cycles,memory_bound,nest\n";
    txt << "per-layer best mappings (" << w.name << ")\n";
    for (size_t oi = 0; oi < w.nodes.size(); ++oi) {
        const auto& op = w.nodes[oi];
        if (op.is_source()) continue;
        int first = tg.tiles_of_op[oi].front();
        auto shape = intramap::tile_shape(w, tg.tiles[first]);
        const auto& mc = mapper.best_mapping(shape, 0);
        if (!mc.valid) throw ModelError("no valid mapping for layer " + op.name);
        int n_tiles = int(tg.tiles_of_op[oi].size());
        csv << op.name << "," << op.block_id << "," << workload::to_string(op.op_class)
            << "," << shape.op_count() * n_tiles << "," << (shape.sop ? 1 : 0) << ","
            << mc.energy * n_tiles << "," << mc.latency << ","
            << (mc.memory_bound ? 1 : 0) << "," << mc.nest.to_string() << "\n";
        txt << "  " << op.name << ": tile energy " << mc.energy << " fJ, latency "
            << mc.latency << " cycles" << (mc.memory_bound ? " (memory bound)" : "")
            << "\n    nest " << mc.nest.to_string() << "\n";
    }
    write_file(fs::path(cfg.out_dir) / "cost.csv", csv.str());
    write_file(fs::path(cfg.out_dir) / "cost.txt", txt.str());
    std::cout << txt.str();
    if (cfg.stats) print_stats(mapper);
    return 0;
}

int cmd_schedule(const RunConfig& cfg) {
    auto w = cfg.load_workload();
    auto acc = cfg.load_accel();
    auto cuts = cfg.load_cuts(w);
    auto tg = tilegraph::generate_tile_graph(w, cuts);
    intramap::Mapper mapper(acc);
    auto res = scheduler::schedule(tg, acc, mapper);

    write_file(fs::path(cfg.out_dir) / "breakdown.csv", res.energy.to_csv());
    write_file(fs::path(cfg.out_dir) / "trace.jsonl", trace_jsonl(tg, res));
    std::ostringstream sum;
    sum << w.name << " schedule\n"
        << "  tiles executed: " << res.exec_trace.size() << "\n"
        << "  total energy:   " << res.energy.total << " fJ ("
        << double(res.energy.total) * 1e-12 << " mJ)\n"
        << "  latency:        " << res.latency << " cycles\n"
        << "  DRAM traffic:   " << res.dram_bits << " bits\n";
    static const char* gname[] = {"weight", "state", "feature"};
    for (int g = 0; g < kNumOperandGroups; ++g)
        sum << "    " << gname[g] << ": " << res.dram_bits_by_group[g] << " bits\n";
    write_file(fs::path(cfg.out_dir) / "summary.txt", sum.str());
    std::cout << sum.str();
    if (cfg.stats) print_stats(mapper);
    return 0;
}

int cmd_explore(const RunConfig& cfg) {
    auto w = cfg.load_workload();
    auto acc = cfg.load_accel();
    auto grid =
        explorer::hybrid_grid_explore(w, acc, cfg.batching_direction(), cfg.jobs);

    write_file(fs::path(cfg.out_dir) / "heatmap_dram.csv", grid.heatmap_csv(0));
    write_file(fs::path(cfg.out_dir) / "heatmap_energy.csv", grid.heatmap_csv(1));
    write_file(fs::path(cfg.out_dir) / "heatmap_latency.csv", grid.heatmap_csv(2));

    const auto& best = grid.best();
    const auto& base = grid.at(0, 0);

    // re-run the winning point for its breakdown and trace
    auto tg = tilegraph::generate_tile_graph(w, best.cuts);
    intramap::Mapper mapper(acc);
    auto res = scheduler::schedule(tg, acc, mapper);
    write_file(fs::path(cfg.out_dir) / "breakdown.csv", res.energy.to_csv());

    std::ostringstream cuts_json;
    cuts_json << "{\"blocks\":[";
    for (int b = 0; b < grid.n_blocks; ++b) {
        auto c = best.cuts.for_block(b);
        cuts_json << (b ? "," : "") << "{\"block\":" << b << ",\"fuse\":" << c.spatial_cut
                  << ",\"tbatch\":" << c.temporal_cut << "}";
    }
    cuts_json << "]}\n";
    write_file(fs::path(cfg.out_dir) / "best_cuts.json", cuts_json.str());

    std::ostringstream sum;
    sum << w.name << " hybrid exploration: " << grid.points.size() << " points ("
        << grid.n_blocks << " blocks), batching from "
        << (grid.ranking.batch_from_output ? "output" : "input") << " side\n";
    sum << "  baseline (0,0): dram " << double(base.summary.dram_energy) * 1e-12
        << " mJ, total " << double(base.summary.total_energy) * 1e-12 << " mJ, "
        << base.summary.dram_bits << " bits\n";
    sum << "  best (" << best.n_fused << "," << best.n_batched << "): dram "
        << double(best.summary.dram_energy) * 1e-12 << " mJ, total "
        << double(best.summary.total_energy) * 1e-12 << " mJ, "
        << best.summary.dram_bits << " bits\n";
    if (best.summary.dram_bits > 0 && best.summary.total_energy > 0) {
        sum << "  reduction vs baseline: dram traffic "
            << double(base.summary.dram_bits) / double(best.summary.dram_bits)
            << "x, dram energy "
            << double(base.summary.dram_energy) / double(best.summary.dram_energy)
            << "x, total energy "
            << double(base.summary.total_energy) / double(best.summary.total_energy)
            << "x\n";
    }
    write_file(fs::path(cfg.out_dir) / "summary.txt", sum.str());
    std::cout << sum.str();
    return 0;
}

int cmd_sweep(const RunConfig& cfg) {
    auto w = cfg.load_workload();
    auto acc = cfg.load_accel();
    std::vector<int64_t> factors;
    std::stringstream ss(cfg.factors);
    std::string tok;
    while (std::getline(ss, tok, ',')) factors.push_back(std::stoll(tok));
    auto rows = explorer::time_batch_sweep(w, acc, factors);

    std::ostringstream csv;
    csv << "factor,dram_bits,weight_bits,state_bits,feature_bits,dram_energy_fj,"
           "total_energy_fj\n";
    for (const auto& r : rows)
        csv << r.factor << "," << r.dram_bits << ","
            << r.dram_bits_by_group[size_t(OperandGroup::Weight)] << ","
            << r.dram_bits_by_group[size_t(OperandGroup::State)] << ","
            << r.dram_bits_by_group[size_t(OperandGroup::Feature)] << ","
            << r.dram_energy << "," << r.total_energy << "\n";
    write_file(fs::path(cfg.out_dir) / "sweep.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

int cmd_validate(const RunConfig& cfg) {
    auto acc = cfg.load_accel();
    const char* presets[] = {"st-lbl", "tb-lbl", "st-lf", "tb-lf"};
    bool all_ok = true;
    for (const char* bench : {"micro_2", "micro_3", "micro_5"}) {
        auto w = workload::builtin_benchmark(bench);
        for (const char* preset : presets) {
            for (int64_t tc : {int64_t(1), int64_t(2), w.total_timesteps}) {
                RunConfig sub = cfg;
                sub.preset = preset;
                tilegraph::CutSpec cuts = sub.load_cuts(w);
                bool tb = std::string(preset).rfind("tb", 0) == 0;
                for (auto& [b, c] : cuts.blocks)
                    c.temporal_cut = tb ? w.total_timesteps : tc;
                auto tg = tilegraph::generate_tile_graph(w, cuts);
                intramap::Mapper mapper(acc);
                auto res = scheduler::schedule(tg, acc, mapper);
                auto check = oracle::simulate_schedule(tg, acc, mapper, res);
                bool fn = oracle::functional_check(tg, res.order, cfg.seed);
                std::cout << bench << " " << preset << " tcut=" << tc << ": "
                          << (check.ok ? "counts exact" : "MISMATCH") << " ("
                          << check.tiles_walked << " tiles walked), functional "
                          << (fn ? "ok" : "MISMATCH") << "\n";
                if (!check.ok) std::cout << "    " << check.error << "\n";
                all_ok = all_ok && check.ok && fn;
            }
        }
    }
    std::cout << (all_ok ? "validation passed" : "validation FAILED") << "\n";
    return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stems: spatio-temporal mapping exploration for SNN workloads"};
    app.require_subcommand(1);
    RunConfig cfg;
    auto* c_cost = app.add_subcommand("cost", "per-layer best-mapping report");
    auto* c_sched = app.add_subcommand("schedule", "run one schedule end-to-end");
    auto* c_expl = app.add_subcommand("explore", "hybrid fusion x batching grid");
    auto* c_sweep = app.add_subcommand("sweep", "uniform time-batching sweep");
    auto* c_val = app.add_subcommand("validate", "oracle cross-checks on micro benchmarks");
    for (auto* c : {c_cost, c_sched, c_expl, c_sweep, c_val}) add_common(c, cfg);

    try {
        app.parse(argc, argv);
        if (c_cost->parsed()) return cmd_cost(cfg);
        if (c_sched->parsed()) return cmd_schedule(cfg);
        if (c_expl->parsed()) return cmd_explore(cfg);
        if (c_sweep->parsed()) return cmd_sweep(cfg);
        if (c_val->parsed()) return cmd_validate(cfg);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
