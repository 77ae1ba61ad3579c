#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stems/common.hpp"

namespace stems::accel {

enum class LevelId : uint8_t { InputBuf = 0, WeightBuf, GlobalBuf, Dram };
const char* to_string(LevelId id);

// Reporting component for energy breakdowns.
enum class Component : uint8_t { Dram = 0, GlobalSram, LocalBuffer, Pe, Noc };
constexpr int kNumComponents = 5;
const char* to_string(Component c);

struct MemoryLevel {
    std::string name;
    LevelId id = LevelId::GlobalBuf;
    Bits capacity = 0;           // bits; DRAM treated as unbounded
    uint64_t bw_rd = 0;          // bits per cycle
    uint64_t bw_wr = 0;
    EnergyFj energy_rd = 0;      // fJ per bit
    EnergyFj energy_wr = 0;
    std::set<OperandKind> served_operands;

    bool serves(OperandKind k) const { return served_operands.count(k) > 0; }
};

struct PEArray {
    int rows = 16;  // bound to output spatial positions (OY, then OX)
    int cols = 32;  // bound to output channels (K)
    EnergyFj energy_mac = 160;
    EnergyFj energy_sop = 70;
    int accumulator_bits = 16;

    int64_t size() const { return int64_t(rows) * cols; }
};

struct Core {
    int id = 0;
    PEArray pe;
    // Ordered bottom-up: local buffers first, then the shared global buffer.
    std::vector<MemoryLevel> levels;

    const MemoryLevel& level(LevelId id) const;
    const MemoryLevel* find_level(LevelId id) const;
    const MemoryLevel& global_buffer() const { return level(LevelId::GlobalBuf); }
};

struct NocLink {
    int a = -1;          // core id, or -1 for DRAM
    int b = -1;
    uint64_t bandwidth = 32;  // bits per cycle
    EnergyFj energy = 0;      // fJ per bit, on-chip side
};

struct AcceleratorModel {
    std::string name;
    std::vector<Core> cores;
    MemoryLevel dram;
    std::vector<NocLink> noc;
    bool dram_exclusive = true;  // one in-flight DRAM requester at a time

    const Core& core(int id) const;
    const NocLink& dram_link(int core_id) const;
    const NocLink* find_link(int a, int b) const;
};

// Parses the JSON accelerator document and validates the model.
AcceleratorModel parse_accelerator(const std::string& text);
void validate_model(const AcceleratorModel& m);

// Single-core reference model: 16x32 output-stationary array, 32 KB input
// buffer, 16 KB weight buffer, global SRAM of the given size in 128 KB banks,
// DRAM at 11,000/12,000 fJ/bit.
AcceleratorModel builtin_meta_vr(uint64_t global_buffer_bytes, int num_cores = 1);

inline uint64_t global_buffer_banks(uint64_t bytes) {
    const uint64_t bank = 128 * 1024;
    return (bytes + bank - 1) / bank;
}

}  // namespace stems::accel
