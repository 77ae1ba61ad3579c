#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stems/common.hpp"

namespace stems::workload {

// Global precision plan: spiking features are 1 bit, non-spiking features and
// weights 4 bits, stored neuron states 12 bits, PE accumulators 16 bits.
constexpr int kSpikeBits = 1;
constexpr int kValueBits = 4;
constexpr int kWeightBits = 4;
constexpr int kStateBits = 12;
constexpr int kAccumulatorBits = 16;

struct Dimension {
    Axis axis;
    int64_t size = 1;  // >= 1
};

struct OperandSpec {
    OperandKind kind;
    int precision = kValueBits;       // bits per element
    std::set<Axis> relevant_axes;     // axes indexing this operand
};

// Discrete-timestep leaky integrate-and-fire parameters.
struct LifParams {
    double leak_alpha = 1.0;   // membrane leakage in [0,1]
    double v_threshold = 1.0;  // firing threshold, > 0
    double i_reset = 1.0;      // reset current subtracted after a spike
};

enum class OpClass : uint8_t {
    Conv2D = 0,
    Pointwise,
    ElementwiseAdd,
    ElementwiseOr,
    MaxPool,
    InputSource,
};

const char* to_string(OpClass c);

// Affine output->input index map per spatial axis.
struct Projection {
    int kernel_y = 1, kernel_x = 1;
    int stride_y = 1, stride_x = 1;
    int pad_y = 0, pad_x = 0;
};

struct OperatorNode {
    int id = -1;
    std::string name;
    OpClass op_class = OpClass::Conv2D;
    std::vector<int> inputs;  // producer node ids (in argument order)
    Projection projection;
    bool stateful = false;
    std::optional<LifParams> lif;
    int block_id = 0;

    // Inferred shape. in_channels is the C axis (0 for ops without one).
    int64_t out_channels = 1;  // K
    int64_t out_y = 1, out_x = 1;
    int64_t in_channels = 0;
    int64_t in_y = 0, in_x = 0;

    int out_precision = kValueBits;  // 1 for spikes
    std::vector<OperandSpec> operands;

    bool has_weights() const {
        return op_class == OpClass::Conv2D || op_class == OpClass::Pointwise;
    }
    bool is_source() const { return op_class == OpClass::InputSource; }
    int64_t dim(Axis a, int64_t total_timesteps) const;
    int64_t weight_count() const;
    int64_t neuron_count() const { return out_channels * out_y * out_x; }
    const OperandSpec* find_operand(OperandKind k) const;
};

struct Edge {
    int producer = -1;
    int consumer = -1;
};

struct WorkloadGraph {
    std::string name;
    std::vector<OperatorNode> nodes;  // stored in topological order
    std::vector<Edge> edges;
    int64_t total_timesteps = 1;

    int num_blocks() const;
    const OperatorNode& node(int id) const;
    std::vector<int> consumers_of(int id) const;
};

// Parses the JSON workload document (top-level `timesteps` + `layers` array)
// and validates the resulting graph. Throws ParseError naming the offending
// layer id and field.
WorkloadGraph parse_workload(const std::string& text);

// Runs all structural validation on an in-memory graph (also used by the
// builtin benchmarks). Reorders nodes topologically.
void validate_graph(WorkloadGraph& g);

struct StateCounts {
    std::vector<int64_t> per_block;
    int64_t total = 0;
};

StateCounts count_neuron_states(const WorkloadGraph& w);

// Removes stored accumulator state from all operators with
// block_id < keep_from_block. Spike outputs are preserved.
WorkloadGraph strip_states(const WorkloadGraph& w, int keep_from_block);

// One LIF timestep: V' = alpha*V + I - prev_spike*I_reset, spike = V' >= thr.
std::pair<double, int> lif_step(double state, double input_current,
                                const LifParams& params, int prev_spike);

// Builtin benchmarks: sew_resnet18, sew_resnet152, red_lif, micro_<k>.
WorkloadGraph builtin_benchmark(const std::string& name);
bool is_builtin_benchmark(const std::string& name);

}  // namespace stems::workload
