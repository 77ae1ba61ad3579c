#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stems {

// Loop axes. T is the discrete timestep axis; K/C are output/input channels;
// OY/OX output spatial rows/columns; FY/FX kernel rows/columns.
enum class Axis : uint8_t { T = 0, K, C, OY, OX, FY, FX };
constexpr int kNumAxes = 7;

enum class OperandKind : uint8_t {
    Weight = 0,
    InputFeature,
    OutputFeature,
    AccumulatorState,
    AuxState,
};

// Reporting group for energy/traffic breakdowns.
enum class OperandGroup : uint8_t { Weight = 0, State, Feature };
constexpr int kNumOperandGroups = 3;

inline OperandGroup group_of(OperandKind k) {
    switch (k) {
    case OperandKind::Weight: return OperandGroup::Weight;
    case OperandKind::AccumulatorState:
    case OperandKind::AuxState: return OperandGroup::State;
    default: return OperandGroup::Feature;
    }
}

const char* to_string(Axis a);
const char* to_string(OperandKind k);
const char* to_string(OperandGroup g);
Axis axis_from_string(const std::string& s);

// Energy is tracked in integer femtojoules so that breakdown sums are exact.
using EnergyFj = int64_t;
using Cycles = uint64_t;
using Bits = uint64_t;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stems
