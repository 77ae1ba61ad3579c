#include "stems/workload.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

#include <json.hpp>

namespace stems::workload {

using nlohmann::json;

const char* to_string(OpClass c) {
    switch (c) {
    case OpClass::Conv2D: return "conv2d";
    case OpClass::Pointwise: return "pointwise";
    case OpClass::ElementwiseAdd: return "add";
    case OpClass::ElementwiseOr: return "or";
    case OpClass::MaxPool: return "maxpool";
    case OpClass::InputSource: return "input";
    }
    return "?";
}

static OpClass op_class_from_string(const std::string& s, const std::string& ctx) {
    if (s == "conv2d" || s == "conv") return OpClass::Conv2D;
    if (s == "pointwise" || s == "conv1x1") return OpClass::Pointwise;
    if (s == "add") return OpClass::ElementwiseAdd;
    if (s == "or") return OpClass::ElementwiseOr;
    if (s == "maxpool" || s == "pool") return OpClass::MaxPool;
    if (s == "input") return OpClass::InputSource;
    throw ParseError("layer '" + ctx + "': unknown op_class '" + s + "'");
}

int64_t OperatorNode::dim(Axis a, int64_t total_timesteps) const {
    switch (a) {
    case Axis::T: return total_timesteps;
    case Axis::K: return out_channels;
    case Axis::C: return has_weights() ? in_channels : 1;
    case Axis::OY: return out_y;
    case Axis::OX: return out_x;
    case Axis::FY: return projection.kernel_y;
    case Axis::FX: return projection.kernel_x;
    }
    return 1;
}

int64_t OperatorNode::weight_count() const {
    if (!has_weights()) return 0;
    return out_channels * in_channels * projection.kernel_y * projection.kernel_x;
}

const OperandSpec* OperatorNode::find_operand(OperandKind k) const {
    for (const auto& o : operands)
        if (o.kind == k) return &o;
    return nullptr;
}

int WorkloadGraph::num_blocks() const {
    int b = -1;
    for (const auto& n : nodes) b = std::max(b, n.block_id);
    return b + 1;
}

const OperatorNode& WorkloadGraph::node(int id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw ModelError("unknown node id " + std::to_string(id));
}

std::vector<int> WorkloadGraph::consumers_of(int id) const {
    std::vector<int> out;
    for (const auto& e : edges)
        if (e.producer == id) out.push_back(e.consumer);
    return out;
}

std::pair<double, int> lif_step(double state, double input_current,
                                const LifParams& params, int prev_spike) {
    double v = params.leak_alpha * state + input_current -
               (prev_spike ? params.i_reset : 0.0);
    int spike = v >= params.v_threshold ? 1 : 0;
    return {v, spike};
}

// ---------------------------------------------------------------------------
// Validation and shape inference

static void build_operands(OperatorNode& n) {
    n.operands.clear();
    if (n.has_weights()) {
        n.operands.push_back({OperandKind::Weight, kWeightBits,
                              {Axis::K, Axis::C, Axis::FY, Axis::FX}});
    }
    if (!n.is_source()) {
        std::set<Axis> in_axes = {Axis::OY, Axis::OX, Axis::T};
        if (n.has_weights()) {
            in_axes.insert(Axis::C);
            in_axes.insert(Axis::FY);
            in_axes.insert(Axis::FX);
        } else {
            in_axes.insert(Axis::K);
            if (n.op_class == OpClass::MaxPool) {
                in_axes.insert(Axis::FY);
                in_axes.insert(Axis::FX);
            }
        }
        int n_inputs = (n.op_class == OpClass::ElementwiseAdd ||
                        n.op_class == OpClass::ElementwiseOr) ? 2 : 1;
        for (int i = 0; i < n_inputs; ++i)
            n.operands.push_back({OperandKind::InputFeature, 0, in_axes});
    }
    n.operands.push_back({OperandKind::OutputFeature, n.out_precision,
                          {Axis::K, Axis::OY, Axis::OX, Axis::T}});
    if (n.stateful) {
        n.operands.push_back({OperandKind::AccumulatorState, kStateBits,
                              {Axis::K, Axis::OY, Axis::OX}});
    }
}

static int64_t conv_out(int64_t in, int kernel, int stride, int pad,
                        const std::string& ctx) {
    int64_t out = (in + 2 * pad - kernel) / stride + 1;
    if (out < 1)
        throw ParseError("layer '" + ctx + "': projection yields empty output (in=" +
                         std::to_string(in) + ", kernel=" + std::to_string(kernel) + ")");
    return out;
}

void validate_graph(WorkloadGraph& g) {
    if (g.total_timesteps < 1) throw ParseError("timesteps must be >= 1");

    std::map<int, int> index_of;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        if (index_of.count(g.nodes[i].id))
            throw ParseError("duplicate node id " + std::to_string(g.nodes[i].id) +
                             " ('" + g.nodes[i].name + "')");
        index_of[g.nodes[i].id] = int(i);
    }

    // Rebuild edges from input lists.
    g.edges.clear();
    for (const auto& n : g.nodes) {
        if (n.is_source() && !n.inputs.empty())
            throw ParseError("input layer '" + n.name + "' must not have inputs");
        if (!n.is_source() && n.inputs.empty())
            throw ParseError("layer '" + n.name + "' has no inputs");
        size_t want = (n.op_class == OpClass::ElementwiseAdd ||
                       n.op_class == OpClass::ElementwiseOr) ? 2 : (n.is_source() ? 0 : 1);
        if (n.inputs.size() != want)
            throw ParseError("layer '" + n.name + "': expected " + std::to_string(want) +
                             " inputs, got " + std::to_string(n.inputs.size()));
        for (int p : n.inputs) {
            if (!index_of.count(p))
                throw ParseError("layer '" + n.name + "': unknown input id " +
                                 std::to_string(p));
            g.edges.push_back({p, n.id});
        }
    }

    // Kahn topological sort; cycle detection names a participant.
    std::map<int, int> indegree;
    for (const auto& n : g.nodes) indegree[n.id] = int(n.inputs.size());
    std::deque<int> ready;
    for (const auto& n : g.nodes)
        if (indegree[n.id] == 0) ready.push_back(n.id);
    std::vector<int> topo;
    std::map<int, std::vector<int>> consumers;
    for (const auto& e : g.edges) consumers[e.producer].push_back(e.consumer);
    while (!ready.empty()) {
        std::sort(ready.begin(), ready.end());
        int id = ready.front();
        ready.pop_front();
        topo.push_back(id);
        for (int c : consumers[id])
            if (--indegree[c] == 0) ready.push_back(c);
    }
    if (topo.size() != g.nodes.size()) {
        for (const auto& [id, deg] : indegree)
            if (deg > 0)
                throw ParseError("cycle detected involving node '" +
                                 g.nodes[index_of[id]].name + "' (id " +
                                 std::to_string(id) + ")");
    }

    std::vector<OperatorNode> ordered;
    ordered.reserve(g.nodes.size());
    for (int id : topo) ordered.push_back(g.nodes[index_of[id]]);
    g.nodes = std::move(ordered);
    index_of.clear();
    for (size_t i = 0; i < g.nodes.size(); ++i) index_of[g.nodes[i].id] = int(i);

    // Forward shape inference.
    for (auto& n : g.nodes) {
        const std::string& ctx = n.name;
        auto& proj = n.projection;
        if (proj.stride_y < 1 || proj.stride_x < 1)
            throw ParseError("layer '" + ctx + "': stride must be >= 1");
        switch (n.op_class) {
        case OpClass::InputSource:
            if (n.out_channels < 1 || n.out_y < 1 || n.out_x < 1)
                throw ParseError("input layer '" + ctx + "': invalid shape");
            break;
        case OpClass::Conv2D:
        case OpClass::Pointwise: {
            const auto& p = g.nodes[index_of[n.inputs[0]]];
            if (n.op_class == OpClass::Pointwise &&
                (proj.kernel_y != 1 || proj.kernel_x != 1))
                throw ParseError("layer '" + ctx + "': pointwise kernel must be 1x1");
            n.in_channels = p.out_channels;
            n.in_y = p.out_y;
            n.in_x = p.out_x;
            n.out_y = conv_out(n.in_y, proj.kernel_y, proj.stride_y, proj.pad_y, ctx);
            n.out_x = conv_out(n.in_x, proj.kernel_x, proj.stride_x, proj.pad_x, ctx);
            if (n.out_channels < 1)
                throw ParseError("layer '" + ctx + "': out_channels must be >= 1");
            break;
        }
        case OpClass::MaxPool: {
            const auto& p = g.nodes[index_of[n.inputs[0]]];
            n.in_channels = 0;
            n.out_channels = p.out_channels;
            n.in_y = p.out_y;
            n.in_x = p.out_x;
            n.out_y = conv_out(n.in_y, proj.kernel_y, proj.stride_y, proj.pad_y, ctx);
            n.out_x = conv_out(n.in_x, proj.kernel_x, proj.stride_x, proj.pad_x, ctx);
            n.out_precision = p.out_precision;
            break;
        }
        case OpClass::ElementwiseAdd:
        case OpClass::ElementwiseOr: {
            const auto& a = g.nodes[index_of[n.inputs[0]]];
            const auto& b = g.nodes[index_of[n.inputs[1]]];
            if (a.out_channels != b.out_channels || a.out_y != b.out_y ||
                a.out_x != b.out_x)
                throw ParseError("layer '" + ctx + "': shape mismatch between inputs '" +
                                 a.name + "' (" + std::to_string(a.out_channels) + "x" +
                                 std::to_string(a.out_y) + "x" + std::to_string(a.out_x) +
                                 ") and '" + b.name + "'");
            n.in_channels = 0;
            n.out_channels = a.out_channels;
            n.out_y = a.out_y;
            n.out_x = a.out_x;
            n.in_y = a.out_y;
            n.in_x = a.out_x;
            if (proj.kernel_y != 1 || proj.kernel_x != 1 || proj.stride_y != 1 ||
                proj.stride_x != 1)
                throw ParseError("layer '" + ctx + "': elementwise projection must be identity");
            if (n.op_class == OpClass::ElementwiseOr)
                n.out_precision = kSpikeBits;
            else
                n.out_precision = kValueBits;
            break;
        }
        }
        if ((n.op_class == OpClass::MaxPool || n.op_class == OpClass::ElementwiseAdd ||
             n.op_class == OpClass::ElementwiseOr) && n.stateful)
            throw ParseError("layer '" + ctx + "': only convolution layers may carry state");
        if (n.stateful && !n.lif)
            n.lif = LifParams{};
        if (n.lif && n.has_weights()) n.out_precision = kSpikeBits;
        if (n.lif && n.lif->v_threshold <= 0)
            throw ParseError("layer '" + ctx + "': v_threshold must be > 0");
        build_operands(n);
        // input precisions now that producers are resolved
        size_t in_idx = 0;
        for (auto& op : n.operands)
            if (op.kind == OperandKind::InputFeature) {
                const auto& p = g.nodes[index_of[n.inputs[in_idx++]]];
                op.precision = p.out_precision;
            }
        if (n.op_class == OpClass::ElementwiseOr)
            for (const auto& op : n.operands)
                if (op.kind == OperandKind::InputFeature && op.precision != kSpikeBits)
                    throw ParseError("layer '" + ctx + "': OR inputs must be spikes");
    }

    // Block ids: contiguous from 0, non-decreasing along edges.
    std::set<int> blocks;
    for (const auto& n : g.nodes) {
        if (n.block_id < 0)
            throw ParseError("layer '" + n.name + "': negative block id");
        blocks.insert(n.block_id);
    }
    int expect = 0;
    for (int b : blocks)
        if (b != expect++)
            throw ParseError("block ids must be contiguous from 0 (missing block " +
                             std::to_string(expect - 1) + ")");
    for (const auto& e : g.edges) {
        const auto& p = g.nodes[index_of[e.producer]];
        const auto& c = g.nodes[index_of[e.consumer]];
        if (p.block_id > c.block_id)
            throw ParseError("edge from '" + p.name + "' (block " +
                             std::to_string(p.block_id) + ") to '" + c.name +
                             "' (block " + std::to_string(c.block_id) +
                             ") goes against block order");
    }
}

WorkloadGraph parse_workload(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("workload document is not valid JSON: ") + e.what());
    }
    WorkloadGraph g;
    g.name = doc.value("name", "workload");
    if (!doc.contains("timesteps"))
        throw ParseError("missing top-level key 'timesteps'");
    g.total_timesteps = doc.at("timesteps").get<int64_t>();
    if (!doc.contains("layers") || !doc.at("layers").is_array())
        throw ParseError("missing top-level array 'layers'");

    auto get_pair = [](const json& j, const std::string& key, int def) {
        std::pair<int, int> v{def, def};
        if (!j.contains(key)) return v;
        const auto& e = j.at(key);
        if (e.is_array()) {
            v.first = e.at(0).get<int>();
            v.second = e.at(1).get<int>();
        } else {
            v.first = v.second = e.get<int>();
        }
        return v;
    };

    for (const auto& jl : doc.at("layers")) {
        OperatorNode n;
        if (!jl.contains("id")) throw ParseError("layer missing 'id'");
        n.id = jl.at("id").get<int>();
        n.name = jl.value("name", "layer" + std::to_string(n.id));
        n.op_class = op_class_from_string(jl.value("class", "conv2d"), n.name);
        if (jl.contains("inputs"))
            for (const auto& i : jl.at("inputs")) n.inputs.push_back(i.get<int>());
        n.block_id = jl.value("block", 0);
        n.stateful = jl.value("stateful", false);
        auto [ky, kx] = get_pair(jl, "kernel", 1);
        auto [sy, sx] = get_pair(jl, "stride", 1);
        auto [py, px] = get_pair(jl, "padding", 0);
        n.projection = {ky, kx, sy, sx, py, px};
        if (n.op_class == OpClass::InputSource) {
            n.out_channels = jl.value("channels", 1);
            n.out_y = jl.value("height", 1);
            n.out_x = jl.value("width", 1);
            n.out_precision = jl.value("spike", false) ? kSpikeBits : kValueBits;
        } else {
            n.out_channels = jl.value("out_channels", int64_t(0));
        }
        if (jl.contains("lif")) {
            const auto& l = jl.at("lif");
            n.lif = LifParams{l.value("alpha", 1.0), l.value("v_thr", 1.0),
                              l.value("i_reset", 1.0)};
        }
        g.nodes.push_back(std::move(n));
    }
    validate_graph(g);
    return g;
}

StateCounts count_neuron_states(const WorkloadGraph& w) {
    StateCounts sc;
    sc.per_block.assign(w.num_blocks(), 0);
    for (const auto& n : w.nodes) {
        if (!n.stateful) continue;
        int64_t c = n.neuron_count();
        sc.per_block[n.block_id] += c;
        sc.total += c;
    }
    return sc;
}

WorkloadGraph strip_states(const WorkloadGraph& w, int keep_from_block) {
    if (keep_from_block < 0 || keep_from_block > w.num_blocks())
        throw ModelError("keep_from_block out of range");
    WorkloadGraph g = w;
    for (auto& n : g.nodes) {
        if (n.block_id < keep_from_block && n.stateful) {
            n.stateful = false;  // lif kept: activation stays spike-based
            build_operands(n);
            for (auto& op : n.operands)
                if (op.kind == OperandKind::InputFeature)
                    op.precision = g.node(n.inputs[0]).out_precision;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Builtin benchmarks

namespace {

class Builder {
public:
    explicit Builder(std::string name, int64_t timesteps) {
        g_.name = std::move(name);
        g_.total_timesteps = timesteps;
    }

    int input(const std::string& name, int64_t ch, int64_t h, int64_t w, bool spike,
              int block) {
        OperatorNode n;
        n.id = next_++;
        n.name = name;
        n.op_class = OpClass::InputSource;
        n.out_channels = ch;
        n.out_y = h;
        n.out_x = w;
        n.out_precision = spike ? kSpikeBits : kValueBits;
        n.block_id = block;
        g_.nodes.push_back(n);
        return n.id;
    }

    int conv(const std::string& name, int in, int64_t k, int kernel, int stride,
             int pad, bool lif, bool stateful, int block) {
        OperatorNode n;
        n.id = next_++;
        n.name = name;
        n.op_class = kernel == 1 ? OpClass::Pointwise : OpClass::Conv2D;
        n.inputs = {in};
        n.out_channels = k;
        n.projection = {kernel, kernel, stride, stride, pad, pad};
        n.stateful = stateful;
        if (lif) n.lif = LifParams{0.5, 1.0, 1.0};
        n.block_id = block;
        g_.nodes.push_back(n);
        return n.id;
    }

    int pool(const std::string& name, int in, int block) {
        OperatorNode n;
        n.id = next_++;
        n.name = name;
        n.op_class = OpClass::MaxPool;
        n.inputs = {in};
        n.projection = {2, 2, 2, 2, 0, 0};
        n.block_id = block;
        g_.nodes.push_back(n);
        return n.id;
    }

    int join(OpClass cls, const std::string& name, int a, int b, int block) {
        OperatorNode n;
        n.id = next_++;
        n.name = name;
        n.op_class = cls;
        n.inputs = {a, b};
        n.block_id = block;
        g_.nodes.push_back(n);
        return n.id;
    }

    int64_t out_channels(int id) const {
        for (const auto& n : g_.nodes)
            if (n.id == id) return n.out_channels;
        return 0;
    }

    WorkloadGraph finish() {
        validate_graph(g_);
        return std::move(g_);
    }

private:
    WorkloadGraph g_;
    int next_ = 0;
};

WorkloadGraph build_sew_resnet18() {
    // 7 SEW blocks on a 2x128x128 DVS input, 16 timesteps. Channel plan
    // [64,64,128,128,256,256,512], two conv-LIF layers per block plus the
    // SEW OR residual and a 2x2 max-pool. Block 0 additionally carries the
    // stem convolution at full resolution.
    Builder b("sew_resnet18", 16);
    int x = b.input("dvs_in", 2, 128, 128, false, 0);
    const int64_t plan[7] = {64, 64, 128, 128, 256, 256, 512};
    int spatial = 128;
    for (int blk = 0; blk < 7; ++blk) {
        std::string p = "b" + std::to_string(blk) + "_";
        if (blk == 0) {
            x = b.conv(p + "stem", x, plan[0], 3, 1, 1, true, true, 0);
            x = b.pool(p + "stem_pool", x, 0);
            spatial = 64;
        }
        int64_t cin = b.out_channels(x);
        int c1 = b.conv(p + "conv1", x, plan[blk], 3, 1, 1, true, true, blk);
        int c2 = b.conv(p + "conv2", c1, plan[blk], 3, 1, 1, true, true, blk);
        int shortcut = (cin == plan[blk]) ? x : c1;
        x = b.join(OpClass::ElementwiseOr, p + "sew_or", c2, shortcut, blk);
        if (spatial > 1) {
            x = b.pool(p + "pool", x, blk);
            spatial /= 2;
        }
    }
    return b.finish();
}

WorkloadGraph build_red_lif() {
    // Hybrid detector: 3 feed-forward residual blocks (valued features)
    // followed by 5 convolutional LIF layers, on a 6x360x640 input over 12
    // timesteps.
    Builder b("red_lif", 12);
    int x = b.input("dvs_in", 6, 360, 640, false, 0);
    const int64_t ff_plan[3] = {32, 64, 128};
    for (int blk = 0; blk < 3; ++blk) {
        std::string p = "ff" + std::to_string(blk) + "_";
        int64_t cin = b.out_channels(x);
        int stride = blk == 0 ? 1 : 1;
        int c1 = b.conv(p + "conv1", x, ff_plan[blk], 3, stride, 1, false, false, blk);
        int c2 = b.conv(p + "conv2", c1, ff_plan[blk], 3, 1, 1, false, false, blk);
        int shortcut = (cin == ff_plan[blk]) ? x : c1;
        x = b.join(OpClass::ElementwiseAdd, p + "add", c2, shortcut, blk);
        x = b.pool(p + "pool", x, blk);
    }
    // conv-LIF head: 128 -> 256 stride 2, then 256 -> 256 (stride 2 once)
    x = b.conv("lif0", x, 256, 3, 2, 1, true, true, 3);
    x = b.conv("lif1", x, 256, 3, 2, 1, true, true, 4);
    x = b.conv("lif2", x, 256, 3, 1, 1, true, true, 5);
    x = b.conv("lif3", x, 256, 3, 1, 1, true, true, 6);
    x = b.conv("lif4", x, 256, 3, 1, 1, true, true, 7);
    return b.finish();
}

WorkloadGraph build_sew_resnet152() {
    // 50 residual blocks coarsened into 7 hyperblocks:
    // [3@64, 8@128, 9@256 x4, 3@512], 224x224 input rate-coded over 4
    // timesteps. Hyperblock ids drive the workload cuts.
    Builder b("sew_resnet152", 4);
    int x = b.input("rate_in", 3, 224, 224, true, 0);
    x = b.conv("stem", x, 64, 7, 2, 3, true, true, 0);
    x = b.pool("stem_pool", x, 0);

    struct Group { int count; int64_t depth; };
    const Group groups[4] = {{3, 64}, {8, 128}, {36, 256}, {3, 512}};
    int res_index = 0;
    for (int gi = 0; gi < 4; ++gi) {
        for (int i = 0; i < groups[gi].count; ++i) {
            int hyper;
            if (gi == 0) hyper = 0;
            else if (gi == 1) hyper = 1;
            else if (gi == 2) hyper = 2 + i / 9;
            else hyper = 6;
            std::string p = "r" + std::to_string(res_index++) + "_";
            int64_t cin = b.out_channels(x);
            int stride = (gi > 0 && i == 0) ? 2 : 1;
            int c1 = b.conv(p + "conv1", x, groups[gi].depth, 3, stride, 1, true,
                            true, hyper);
            int c2 = b.conv(p + "conv2", c1, groups[gi].depth, 3, 1, 1, true, true,
                            hyper);
            int shortcut = (cin == groups[gi].depth && stride == 1) ? x : c1;
            x = b.join(OpClass::ElementwiseOr, p + "sew_or", c2, shortcut, hyper);
        }
    }
    return b.finish();
}

WorkloadGraph build_micro(int k) {
    // k-layer 1D conv-LIF chain for oracle tests: 16-row maps, kernel 3x1,
    // 4 timesteps, one block per layer.
    Builder b("micro_" + std::to_string(k), 4);
    int x = b.input("spikes_in", 2, 16, 1, true, 0);
    for (int i = 0; i < k; ++i) {
        int64_t ch = (i % 2 == 0) ? 4 : 2;
        x = b.conv("l" + std::to_string(i), x, ch, 3, 1, 1, true, true, i);
    }
    auto g = b.finish();
    // 1D: kernel 3x1 with padding only on Y
    for (auto& n : g.nodes) {
        if (n.op_class == OpClass::Conv2D) {
            n.projection.kernel_x = 1;
            n.projection.pad_x = 0;
        }
    }
    validate_graph(g);
    return g;
}

}  // namespace

bool is_builtin_benchmark(const std::string& name) {
    return name == "sew_resnet18" || name == "sew_resnet152" || name == "red_lif" ||
           name.rfind("micro_", 0) == 0;
}

WorkloadGraph builtin_benchmark(const std::string& name) {
    if (name == "sew_resnet18") return build_sew_resnet18();
    if (name == "sew_resnet152") return build_sew_resnet152();
    if (name == "red_lif") return build_red_lif();
    if (name.rfind("micro_", 0) == 0) {
        int k = std::stoi(name.substr(6));
        if (k < 1 || k > 16) throw ParseError("micro_<k>: k must be in [1,16]");
        return build_micro(k);
    }
    throw ParseError("unknown builtin benchmark '" + name + "'");
}

}  // namespace stems::workload
