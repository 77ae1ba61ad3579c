#include "stems/accelerator.hpp"

#include <json.hpp>

namespace stems::accel {

using nlohmann::json;

const char* to_string(LevelId id) {
    switch (id) {
    case LevelId::InputBuf: return "input_buf";
    case LevelId::WeightBuf: return "weight_buf";
    case LevelId::GlobalBuf: return "global_buf";
    case LevelId::Dram: return "dram";
    }
    return "?";
}

const char* to_string(Component c) {
    switch (c) {
    case Component::Dram: return "dram";
    case Component::GlobalSram: return "global_sram";
    case Component::LocalBuffer: return "local_buffers";
    case Component::Pe: return "pe";
    case Component::Noc: return "noc";
    }
    return "?";
}

const MemoryLevel& Core::level(LevelId id) const {
    const MemoryLevel* l = find_level(id);
    if (!l) throw ModelError(std::string("core has no level '") + to_string(id) + "'");
    return *l;
}

const MemoryLevel* Core::find_level(LevelId id) const {
    for (const auto& l : levels)
        if (l.id == id) return &l;
    return nullptr;
}

const Core& AcceleratorModel::core(int id) const {
    for (const auto& c : cores)
        if (c.id == id) return c;
    throw ModelError("unknown core id " + std::to_string(id));
}

const NocLink* AcceleratorModel::find_link(int a, int b) const {
    for (const auto& l : noc)
        if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return &l;
    return nullptr;
}

const NocLink& AcceleratorModel::dram_link(int core_id) const {
    const NocLink* l = find_link(core_id, -1);
    if (!l) throw ModelError("no DRAM link for core " + std::to_string(core_id));
    return *l;
}

void validate_model(const AcceleratorModel& m) {
    if (m.cores.empty()) throw ParseError("accelerator has no cores");
    if (m.dram.id != LevelId::Dram) throw ParseError("missing DRAM level");
    if (!m.dram_exclusive)
        throw ParseError("dram_exclusive must be true (single in-flight requester)");
    const OperandKind kinds[] = {OperandKind::Weight, OperandKind::InputFeature,
                                 OperandKind::OutputFeature,
                                 OperandKind::AccumulatorState};
    for (const auto& c : m.cores) {
        if (c.pe.rows < 1 || c.pe.cols < 1)
            throw ParseError("core " + std::to_string(c.id) + ": empty PE array");
        if (!c.find_level(LevelId::GlobalBuf))
            throw ParseError("core " + std::to_string(c.id) + ": missing global buffer");
        for (const auto& l : c.levels)
            if (l.capacity == 0)
                throw ParseError("core " + std::to_string(c.id) + ": level '" + l.name +
                                 "' has zero capacity");
        for (OperandKind k : kinds) {
            bool served = false;
            for (const auto& l : c.levels) served |= l.serves(k);
            if (!served)
                throw ParseError("core " + std::to_string(c.id) +
                                 ": no memory level serves operand '" +
                                 std::string(stems::to_string(k)) + "'");
        }
        m.dram_link(c.id);  // throws if absent
    }
}

AcceleratorModel builtin_meta_vr(uint64_t global_buffer_bytes, int num_cores) {
    if (global_buffer_bytes == 0) throw ParseError("global buffer size must be > 0");
    AcceleratorModel m;
    m.name = "meta_vr";
    m.dram = {"dram", LevelId::Dram, ~0ull, 32, 32, 11000, 12000,
              {OperandKind::Weight, OperandKind::InputFeature,
               OperandKind::OutputFeature, OperandKind::AccumulatorState,
               OperandKind::AuxState}};
    for (int i = 0; i < num_cores; ++i) {
        Core c;
        c.id = i;
        c.pe = PEArray{16, 32, 160, 70, 16};
        c.levels = {
            {"in_buf_32k", LevelId::InputBuf, 32ull * 1024 * 8, 256, 256, 100, 120,
             {OperandKind::InputFeature}},
            {"wt_buf_16k", LevelId::WeightBuf, 16ull * 1024 * 8, 256, 256, 100, 120,
             {OperandKind::Weight}},
            {"global_sram", LevelId::GlobalBuf, global_buffer_bytes * 8, 512, 512,
             130, 170,
             {OperandKind::Weight, OperandKind::InputFeature,
              OperandKind::OutputFeature, OperandKind::AccumulatorState,
              OperandKind::AuxState}},
        };
        m.cores.push_back(std::move(c));
        m.noc.push_back({i, -1, 32, 0});  // core <-> DRAM
    }
    for (int i = 0; i < num_cores; ++i)
        for (int j = i + 1; j < num_cores; ++j)
            m.noc.push_back({i, j, 64, 50});
    validate_model(m);
    return m;
}

AcceleratorModel parse_accelerator(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("accelerator document is not valid JSON: ") +
                         e.what());
    }
    AcceleratorModel m;
    m.name = doc.value("name", "accelerator");

    auto parse_serves = [](const json& j) {
        std::set<OperandKind> s;
        for (const auto& e : j) {
            std::string v = e.get<std::string>();
            if (v == "weight") s.insert(OperandKind::Weight);
            else if (v == "input") s.insert(OperandKind::InputFeature);
            else if (v == "output") s.insert(OperandKind::OutputFeature);
            else if (v == "state") {
                s.insert(OperandKind::AccumulatorState);
                s.insert(OperandKind::AuxState);
            } else throw ParseError("unknown operand kind '" + v + "' in serves[]");
        }
        return s;
    };

    if (!doc.contains("dram")) throw ParseError("missing 'dram' section");
    {
        const auto& jd = doc.at("dram");
        m.dram.name = "dram";
        m.dram.id = LevelId::Dram;
        m.dram.capacity = ~0ull;
        m.dram.energy_rd = jd.value("e_rd_fj_bit", 11000);
        m.dram.energy_wr = jd.value("e_wr_fj_bit", 12000);
        m.dram.bw_rd = m.dram.bw_wr = jd.value("link_bw", 32);
        m.dram.served_operands = {OperandKind::Weight, OperandKind::InputFeature,
                                  OperandKind::OutputFeature,
                                  OperandKind::AccumulatorState, OperandKind::AuxState};
    }

    if (!doc.contains("cores") || doc.at("cores").empty())
        throw ParseError("missing 'cores' array");
    for (const auto& jc : doc.at("cores")) {
        Core c;
        c.id = jc.value("id", int(m.cores.size()));
        if (jc.contains("pe")) {
            const auto& jp = jc.at("pe");
            c.pe.rows = jp.value("rows", 16);
            c.pe.cols = jp.value("cols", 32);
            c.pe.energy_mac = jp.value("e_mac_fj", 160);
            c.pe.energy_sop = jp.value("e_sop_fj", 70);
            c.pe.accumulator_bits = jp.value("acc_bits", 16);
        }
        for (const auto& jl : jc.at("levels")) {
            MemoryLevel l;
            l.name = jl.at("name").get<std::string>();
            std::string role = jl.value("role", l.name);
            if (role.find("input") != std::string::npos) l.id = LevelId::InputBuf;
            else if (role.find("weight") != std::string::npos) l.id = LevelId::WeightBuf;
            else l.id = LevelId::GlobalBuf;
            l.capacity = jl.at("kb").get<uint64_t>() * 1024 * 8;
            l.bw_rd = jl.value("bw_rd", 256);
            l.bw_wr = jl.value("bw_wr", 256);
            l.energy_rd = jl.value("e_rd_fj_bit", 100);
            l.energy_wr = jl.value("e_wr_fj_bit", 120);
            if (jl.contains("serves")) l.served_operands = parse_serves(jl.at("serves"));
            c.levels.push_back(std::move(l));
        }
        m.cores.push_back(std::move(c));
    }
    if (doc.contains("noc")) {
        for (const auto& jn : doc.at("noc")) {
            NocLink l;
            l.a = jn.at("a").get<int>();
            l.b = jn.at("b").get<int>();
            l.bandwidth = jn.value("bw", 32);
            l.energy = jn.value("e_fj_bit", 0);
            m.noc.push_back(l);
        }
    } else {
        for (const auto& c : m.cores) m.noc.push_back({c.id, -1, m.dram.bw_rd, 0});
    }
    validate_model(m);
    return m;
}

}  // namespace stems::accel
