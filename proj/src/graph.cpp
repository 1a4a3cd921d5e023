#include "flowmap/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace flowmap {

using nlohmann::json;

std::string kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "Input";
        case NodeKind::Output: return "Output";
        case NodeKind::Convolution: return "Convolution";
        case NodeKind::MaxPool: return "MaxPool";
        case NodeKind::Resize: return "Resize";
        case NodeKind::Split: return "Split";
        case NodeKind::Concat: return "Concat";
        case NodeKind::Add: return "Add";
        case NodeKind::HardSwish: return "HardSwish";
        case NodeKind::LeakyReLU: return "LeakyReLU";
    }
    return "?";
}

std::optional<NodeKind> kind_from_name(const std::string& name) {
    static const std::map<std::string, NodeKind> table = {
        {"Input", NodeKind::Input},       {"Output", NodeKind::Output},
        {"Convolution", NodeKind::Convolution},
        {"MaxPool", NodeKind::MaxPool},   {"Resize", NodeKind::Resize},
        {"Split", NodeKind::Split},       {"Concat", NodeKind::Concat},
        {"Add", NodeKind::Add},           {"HardSwish", NodeKind::HardSwish},
        {"LeakyReLU", NodeKind::LeakyReLU},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::uint64_t fnv1a(const void* data, size_t len, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

const NodeSpec& NetworkGraph::node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw GraphError("unknown node id '" + id + "'");
}

bool NetworkGraph::has_node(const std::string& id) const {
    return std::any_of(nodes.begin(), nodes.end(),
                       [&](const NodeSpec& n) { return n.id == id; });
}

std::vector<EdgeRef> NetworkGraph::edges() const {
    std::vector<EdgeRef> out;
    for (const auto& n : nodes)
        for (int s = 0; s < int(n.inputs.size()); ++s)
            out.push_back({n.inputs[size_t(s)], n.id, s});
    return out;
}

std::vector<EdgeRef> NetworkGraph::input_edges(const std::string& id) const {
    std::vector<EdgeRef> out;
    const auto& n = node(id);
    for (int s = 0; s < int(n.inputs.size()); ++s)
        out.push_back({n.inputs[size_t(s)], id, s});
    return out;
}

std::vector<EdgeRef> NetworkGraph::output_edges(const std::string& id) const {
    std::vector<EdgeRef> out;
    for (const auto& n : nodes)
        for (int s = 0; s < int(n.inputs.size()); ++s)
            if (n.inputs[size_t(s)] == id) out.push_back({id, n.id, s});
    return out;
}

std::vector<std::string> NetworkGraph::topo_order() const {
    std::map<std::string, int> pending;
    for (const auto& n : nodes) pending[n.id] = int(n.inputs.size());
    std::vector<std::string> order;
    std::deque<std::string> ready;
    for (const auto& n : nodes)
        if (n.inputs.empty()) ready.push_back(n.id);
    while (!ready.empty()) {
        auto id = ready.front();
        ready.pop_front();
        order.push_back(id);
        for (const auto& e : output_edges(id))
            if (--pending[e.to] == 0) ready.push_back(e.to);
    }
    if (order.size() != nodes.size()) throw GraphError("cycle detected");
    return order;
}

TensorShape NetworkGraph::edge_shape(const EdgeRef& e) const { return edge_shape(e.key()); }

TensorShape NetworkGraph::edge_shape(const std::string& key) const {
    auto it = edge_shapes.find(key);
    if (it == edge_shapes.end())
        throw GraphError("no shape inferred for edge " + key);
    return it->second;
}

TensorShape NetworkGraph::in_shape(const NodeSpec& n) const {
    if (n.inputs.empty()) return input_shape;
    return edge_shape(EdgeRef{n.inputs[0], n.id, 0});
}

TensorShape NetworkGraph::out_shape(const NodeSpec& n) const {
    auto outs = output_edges(n.id);
    if (outs.empty()) return in_shape(n);
    return edge_shape(outs[0]);
}

std::vector<EdgeRef> NetworkGraph::skip_edges() const {
    std::vector<EdgeRef> out;
    for (const auto& n : nodes) {
        if (n.kind != NodeKind::Concat && n.kind != NodeKind::Add) continue;
        for (const auto& e : input_edges(n.id)) out.push_back(e);
    }
    return out;
}

std::pair<int, int> NetworkGraph::split_range(const EdgeRef& e) const {
    const auto& n = node(e.from);
    if (n.kind != NodeKind::Split) throw GraphError("split_range on non-Split node " + e.from);
    auto outs = output_edges(e.from);
    int c_in = in_shape(n).c;
    std::vector<int> sizes = n.split_sizes;
    if (sizes.empty()) {
        int k = int(outs.size());
        sizes.assign(size_t(k), c_in / std::max(k, 1));
    }
    int offset = 0;
    for (size_t i = 0; i < outs.size(); ++i) {
        if (outs[i] == e) return {offset, sizes[i]};
        offset += sizes[i];
    }
    throw GraphError("edge " + e.key() + " not an output of split " + e.from);
}

namespace {

Padding parse_padding(const json& j, const std::string& id) {
    Padding p;
    if (j.is_number_integer()) {
        int v = j.get<int>();
        p = {v, v, v, v};
    } else if (j.is_array() && j.size() == 4) {
        p = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    } else {
        throw GraphError("node '" + id + "': padding must be an integer or [top,bottom,left,right]");
    }
    if (p.top < 0 || p.bottom < 0 || p.left < 0 || p.right < 0)
        throw GraphError("node '" + id + "': negative padding");
    return p;
}

void require_field(const json& j, const std::string& field, const std::string& id) {
    if (!j.contains(field))
        throw GraphError("node '" + id + "': missing required field '" + field + "'");
}

}  // namespace

NetworkGraph parse_network(const std::string& text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw GraphError(std::string("malformed network description: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
        throw GraphError("network description must be an object with a 'nodes' array");

    NetworkGraph g;
    if (doc.contains("input_shape")) {
        const auto& s = doc["input_shape"];
        if (!s.is_array() || s.size() != 3)
            throw GraphError("input_shape must be [H, W, C]");
        g.input_shape = {s[0].get<int>(), s[1].get<int>(), s[2].get<int>()};
    }

    std::set<std::string> seen;
    for (const auto& jn : doc["nodes"]) {
        require_field(jn, "id", "<anonymous>");
        NodeSpec n;
        n.id = jn["id"].get<std::string>();
        if (!seen.insert(n.id).second)
            throw GraphError("duplicate node id '" + n.id + "'");
        require_field(jn, "kind", n.id);
        auto kind = kind_from_name(jn["kind"].get<std::string>());
        if (!kind)
            throw GraphError("node '" + n.id + "': unknown kind '" +
                             jn["kind"].get<std::string>() + "'");
        n.kind = *kind;
        if (jn.contains("inputs"))
            n.inputs = jn["inputs"].get<std::vector<std::string>>();

        switch (n.kind) {
            case NodeKind::Convolution:
                require_field(jn, "kernel_size", n.id);
                require_field(jn, "filters", n.id);
                n.kernel_size = jn["kernel_size"].get<int>();
                n.filters = jn["filters"].get<int>();
                n.stride = jn.value("stride", 1);
                if (jn.contains("padding")) n.padding = parse_padding(jn["padding"], n.id);
                n.weights_ref = jn.value("weights_ref", n.id + ".weight");
                break;
            case NodeKind::MaxPool:
                require_field(jn, "kernel_size", n.id);
                n.kernel_size = jn["kernel_size"].get<int>();
                n.stride = jn.value("stride", 1);
                if (jn.contains("padding")) n.padding = parse_padding(jn["padding"], n.id);
                break;
            case NodeKind::Resize:
                require_field(jn, "scale_factor", n.id);
                n.scale_factor = jn["scale_factor"].get<int>();
                break;
            case NodeKind::LeakyReLU:
                require_field(jn, "slope", n.id);
                n.slope = jn["slope"].get<double>();
                break;
            case NodeKind::Split:
                if (jn.contains("split_sizes"))
                    n.split_sizes = jn["split_sizes"].get<std::vector<int>>();
                break;
            default:
                break;
        }
        if (n.kernel_size < 0 || (n.kind == NodeKind::Convolution && n.kernel_size < 1))
            throw GraphError("node '" + n.id + "': kernel_size must be >= 1");
        if (n.kind == NodeKind::Convolution && n.filters < 1)
            throw GraphError("node '" + n.id + "': filters must be >= 1");
        if ((n.kind == NodeKind::Convolution || n.kind == NodeKind::MaxPool) && n.stride < 1)
            throw GraphError("node '" + n.id + "': stride must be >= 1");
        if (n.kind == NodeKind::Resize && n.scale_factor < 1)
            throw GraphError("node '" + n.id + "': scale_factor must be >= 1");
        g.nodes.push_back(std::move(n));
    }

    for (const auto& n : g.nodes)
        for (const auto& in : n.inputs)
            if (!g.has_node(in))
                throw GraphError("node '" + n.id + "': unknown input '" + in + "'");

    // Reject cycles at parse time.
    g.topo_order();

    if (doc.contains("weights_file")) {
        auto path = doc["weights_file"].get<std::string>();
        std::filesystem::path p(path);
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        g.weights = read_weights_file(p.string());
    }
    return g;
}

NetworkGraph parse_network_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GraphError("cannot open network file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string serialize(const NetworkGraph& g) {
    json doc;
    if (g.input_shape.words() > 0)
        doc["input_shape"] = {g.input_shape.h, g.input_shape.w, g.input_shape.c};
    doc["nodes"] = json::array();
    for (const auto& n : g.nodes) {
        json jn;
        jn["id"] = n.id;
        jn["kind"] = kind_name(n.kind);
        jn["inputs"] = n.inputs;
        switch (n.kind) {
            case NodeKind::Convolution:
                jn["kernel_size"] = n.kernel_size;
                jn["filters"] = n.filters;
                jn["stride"] = n.stride;
                jn["padding"] = {n.padding.top, n.padding.bottom, n.padding.left, n.padding.right};
                jn["weights_ref"] = n.weights_ref;
                break;
            case NodeKind::MaxPool:
                jn["kernel_size"] = n.kernel_size;
                jn["stride"] = n.stride;
                jn["padding"] = {n.padding.top, n.padding.bottom, n.padding.left, n.padding.right};
                break;
            case NodeKind::Resize:
                jn["scale_factor"] = n.scale_factor;
                break;
            case NodeKind::LeakyReLU:
                jn["slope"] = n.slope;
                break;
            case NodeKind::Split:
                if (!n.split_sizes.empty()) jn["split_sizes"] = n.split_sizes;
                break;
            default:
                break;
        }
        doc["nodes"].push_back(jn);
    }
    return doc.dump(2);
}

NetworkGraph infer_shapes(const NetworkGraph& g, TensorShape input_shape) {
    if (input_shape.h < 1 || input_shape.w < 1 || input_shape.c < 1)
        throw GraphError("input shape dimensions must be >= 1");
    NetworkGraph out = g;
    out.input_shape = input_shape;
    out.edge_shapes.clear();

    auto order = out.topo_order();
    std::map<std::string, TensorShape> produced;  // node id -> output shape (non-Split)

    for (const auto& id : order) {
        const auto& n = out.node(id);
        std::vector<TensorShape> ins;
        for (const auto& e : out.input_edges(id)) {
            auto it = out.edge_shapes.find(e.key());
            if (it == out.edge_shapes.end())
                throw GraphError("shape of edge " + e.key() + " not available");
            ins.push_back(it->second);
        }

        TensorShape s{0, 0, 0};
        switch (n.kind) {
            case NodeKind::Input:
                s = input_shape;
                break;
            case NodeKind::Output:
            case NodeKind::HardSwish:
            case NodeKind::LeakyReLU:
                s = ins.at(0);
                break;
            case NodeKind::Convolution:
            case NodeKind::MaxPool: {
                auto in = ins.at(0);
                int k = n.kernel_size;
                int ho = (in.h + n.padding.top + n.padding.bottom - k) / n.stride + 1;
                int wo = (in.w + n.padding.left + n.padding.right - k) / n.stride + 1;
                int co = n.kind == NodeKind::Convolution ? n.filters : in.c;
                if (ho < 1 || wo < 1)
                    throw GraphError("node '" + id + "': non-positive derived dimension");
                s = {ho, wo, co};
                break;
            }
            case NodeKind::Resize: {
                auto in = ins.at(0);
                s = {in.h * n.scale_factor, in.w * n.scale_factor, in.c};
                break;
            }
            case NodeKind::Add: {
                for (size_t i = 1; i < ins.size(); ++i)
                    if (!(ins[i] == ins[0]))
                        throw GraphError("node '" + id + "': Add shape mismatch (" +
                                         ins[0].str() + " vs " + ins[i].str() + ")");
                s = ins.at(0);
                break;
            }
            case NodeKind::Concat: {
                int c = 0;
                for (size_t i = 0; i < ins.size(); ++i) {
                    if (ins[i].h != ins[0].h || ins[i].w != ins[0].w)
                        throw GraphError("node '" + id +
                                         "': Concat inputs disagree on spatial dimensions");
                    c += ins[i].c;
                }
                s = {ins.at(0).h, ins.at(0).w, c};
                break;
            }
            case NodeKind::Split:
                s = ins.at(0);  // per-output shapes assigned below
                break;
        }
        produced[id] = s;

        auto outs = out.output_edges(id);
        if (n.kind == NodeKind::Split) {
            auto in = ins.at(0);
            std::vector<int> sizes = n.split_sizes;
            if (sizes.empty()) {
                int k = int(outs.size());
                if (k > 0 && in.c % k != 0)
                    throw GraphError("node '" + id + "': channels (" + std::to_string(in.c) +
                                     ") not divisible into " + std::to_string(k) + " outputs");
                sizes.assign(size_t(std::max(k, 1)), k > 0 ? in.c / k : in.c);
            }
            if (sizes.size() != outs.size())
                throw GraphError("node '" + id + "': split_sizes count does not match outputs");
            int total = 0;
            for (int sz : sizes) {
                if (sz < 1) throw GraphError("node '" + id + "': non-positive split size");
                total += sz;
            }
            if (total != in.c)
                throw GraphError("node '" + id + "': split sizes do not sum to input channels");
            for (size_t i = 0; i < outs.size(); ++i)
                out.edge_shapes[outs[i].key()] = {in.h, in.w, sizes[i]};
        } else {
            for (const auto& e : outs) out.edge_shapes[e.key()] = s;
        }
    }
    return out;
}

std::vector<std::string> validate_graph(const NetworkGraph& g) {
    std::vector<std::string> v;
    int inputs = 0, outputs = 0;
    for (const auto& n : g.nodes) {
        if (n.kind == NodeKind::Input) ++inputs;
        if (n.kind == NodeKind::Output) ++outputs;
    }
    if (inputs != 1) v.push_back("graph must have exactly one Input node, found " +
                                 std::to_string(inputs));
    if (outputs < 1) v.push_back("graph must have at least one Output node");

    try {
        g.topo_order();
    } catch (const GraphError&) {
        v.push_back("cycle detected");
        return v;
    }

    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : g.edges())
        if (!pairs.insert({e.from, e.to}).second)
            v.push_back("duplicate edge " + e.key());

    for (const auto& n : g.nodes) {
        size_t arity = n.inputs.size();
        switch (n.kind) {
            case NodeKind::Input:
                if (arity != 0) v.push_back("node '" + n.id + "': Input must have no inputs");
                break;
            case NodeKind::Concat:
            case NodeKind::Add:
                if (arity < 2)
                    v.push_back("node '" + n.id + "': " + kind_name(n.kind) +
                                " needs >= 2 inputs");
                break;
            default:
                if (arity != 1)
                    v.push_back("node '" + n.id + "': " + kind_name(n.kind) +
                                " needs exactly 1 input");
                break;
        }
        if (n.kind == NodeKind::Split && g.output_edges(n.id).size() < 2)
            v.push_back("node '" + n.id + "': Split needs >= 2 outputs");
        if (n.kind != NodeKind::Output && n.kind != NodeKind::Split &&
            g.output_edges(n.id).empty())
            v.push_back("node '" + n.id + "': dangling output");
    }

    // Shape-level checks, when shapes are available.
    if (!g.edge_shapes.empty()) {
        for (const auto& [key, s] : g.edge_shapes)
            if (s.h < 1 || s.w < 1 || s.c < 1)
                v.push_back("edge " + key + ": non-positive dimension");
        for (const auto& n : g.nodes) {
            if (n.inputs.size() < 2) continue;
            std::vector<TensorShape> ins;
            bool ok = true;
            for (const auto& e : g.input_edges(n.id)) {
                auto it = g.edge_shapes.find(e.key());
                if (it == g.edge_shapes.end()) { ok = false; break; }
                ins.push_back(it->second);
            }
            if (!ok) continue;
            if (n.kind == NodeKind::Add)
                for (size_t i = 1; i < ins.size(); ++i)
                    if (!(ins[i] == ins[0])) {
                        v.push_back("node '" + n.id + "': Add shape mismatch");
                        break;
                    }
            if (n.kind == NodeKind::Concat)
                for (size_t i = 1; i < ins.size(); ++i)
                    if (ins[i].h != ins[0].h || ins[i].w != ins[0].w) {
                        v.push_back("node '" + n.id + "': Concat spatial mismatch");
                        break;
                    }
        }
    }
    return v;
}

namespace {

// splitmix64; bit-deterministic across platforms, unlike <random> distributions.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [-1, 1)
    double next_signed() {
        return (double(next() >> 11) / double(1ULL << 53)) * 2.0 - 1.0;
    }
};

}  // namespace

void ensure_weights(NetworkGraph& g, std::uint64_t seed) {
    for (const auto& n : g.nodes) {
        if (n.kind != NodeKind::Convolution) continue;
        if (g.weights.count(n.weights_ref)) continue;
        TensorShape in = g.in_shape(n);
        WeightTensor w(n.filters, in.c, n.kernel_size, n.kernel_size);
        SplitMix64 rng{fnv1a(n.weights_ref.data(), n.weights_ref.size(), seed ^ 0x5eed)};
        // He-style magnitude so activations stay in a sane dynamic range.
        double scale = 1.0 / std::max(1.0, std::sqrt(double(in.c) * n.kernel_size * n.kernel_size));
        for (auto& x : w.data) x = rng.next_signed() * scale;
        g.weights[n.weights_ref] = std::move(w);
    }
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw GraphError("truncated binary container");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

float read_f32(std::istream& is) {
    std::uint32_t u = read_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void write_weights_file(const std::string& path,
                        const std::map<std::string, WeightTensor>& weights) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw GraphError("cannot write weights file '" + path + "'");
    os.write("SATW", 4);
    write_u32(os, std::uint32_t(weights.size()));
    for (const auto& [name, w] : weights) {
        write_u32(os, std::uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        write_u32(os, std::uint32_t(w.f));
        write_u32(os, std::uint32_t(w.c));
        write_u32(os, std::uint32_t(w.kh));
        write_u32(os, std::uint32_t(w.kw));
        for (double x : w.data) write_f32(os, float(x));
    }
}

std::map<std::string, WeightTensor> read_weights_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw GraphError("cannot open weights file '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "SATW", 4) != 0)
        throw GraphError("bad magic in weights file '" + path + "'");
    std::map<std::string, WeightTensor> out;
    std::uint32_t count = read_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t len = read_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        int f = int(read_u32(is)), c = int(read_u32(is));
        int kh = int(read_u32(is)), kw = int(read_u32(is));
        WeightTensor w(f, c, kh, kw);
        for (auto& x : w.data) x = double(read_f32(is));
        if (!is) throw GraphError("truncated weights file '" + path + "'");
        out[name] = std::move(w);
    }
    return out;
}

void write_tensor_file(const std::string& path, const IntTensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw GraphError("cannot write tensor file '" + path + "'");
    os.write("SATT", 4);
    write_u32(os, std::uint32_t(t.shape.h));
    write_u32(os, std::uint32_t(t.shape.w));
    write_u32(os, std::uint32_t(t.shape.c));
    for (auto v : t.data) write_u32(os, std::uint32_t(std::int32_t(v)));
}

IntTensor read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw GraphError("cannot open tensor file '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::strncmp(magic, "SATT", 4) != 0)
        throw GraphError("bad magic in tensor file '" + path + "'");
    TensorShape s{int(read_u32(is)), int(read_u32(is)), int(read_u32(is))};
    IntTensor t(s);
    for (auto& v : t.data) v = std::int64_t(std::int32_t(read_u32(is)));
    return t;
}

}  // namespace flowmap
