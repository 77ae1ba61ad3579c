#include "stems/common.hpp"

namespace stems {

const char* to_string(Axis a) {
    switch (a) {
    case Axis::T: return "T";
    case Axis::K: return "K";
    case Axis::C: return "C";
    case Axis::OY: return "OY";
    case Axis::OX: return "OX";
    case Axis::FY: return "FY";
    case Axis::FX: return "FX";
    }
    return "?";
}

const char* to_string(OperandKind k) {
    switch (k) {
    case OperandKind::Weight: return "weight";
    case OperandKind::InputFeature: return "input";
    case OperandKind::OutputFeature: return "output";
    case OperandKind::AccumulatorState: return "state";
    case OperandKind::AuxState: return "aux_state";
    }
    return "?";
}

const char* to_string(OperandGroup g) {
    switch (g) {
    case OperandGroup::Weight: return "weight";
    case OperandGroup::State: return "state";
    case OperandGroup::Feature: return "feature";
    }
    return "?";
}

Axis axis_from_string(const std::string& s) {
    if (s == "T") return Axis::T;
    if (s == "K") return Axis::K;
    if (s == "C") return Axis::C;
    if (s == "OY") return Axis::OY;
    if (s == "OX") return Axis::OX;
    if (s == "FY") return Axis::FY;
    if (s == "FX") return Axis::FX;
    throw ParseError("unknown axis name: " + s);
}

}  // namespace stems
