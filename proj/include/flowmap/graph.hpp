#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowmap/tensor.hpp"

namespace flowmap {

enum class NodeKind {
    Input,
    Output,
    Convolution,
    MaxPool,
    Resize,
    Split,
    Concat,
    Add,
    HardSwish,
    LeakyReLU,
};

std::string kind_name(NodeKind k);
std::optional<NodeKind> kind_from_name(const std::string& name);

struct Padding {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;
    bool operator==(const Padding&) const = default;
};

struct NodeSpec {
    std::string id;
    NodeKind kind = NodeKind::Input;
    int kernel_size = 0;           // Convolution, MaxPool
    int stride = 1;                // Convolution, MaxPool
    Padding padding;               // Convolution, MaxPool
    int filters = 0;               // Convolution
    int scale_factor = 0;          // Resize
    double slope = 0.0;            // LeakyReLU
    std::string weights_ref;       // Convolution, optional
    std::vector<std::string> inputs;
    std::vector<int> split_sizes;  // Split, optional (default: equal partition)
};

// Edge identified by producer and consumer id plus the consumer input slot.
// Duplicate (from, to) pairs are rejected during validation so the
// "from->to" key is unique.
struct EdgeRef {
    std::string from;
    std::string to;
    int slot = 0;

    std::string key() const { return from + "->" + to; }
    bool operator==(const EdgeRef&) const = default;
};

struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NetworkGraph {
    std::vector<NodeSpec> nodes;
    std::map<std::string, WeightTensor> weights;
    TensorShape input_shape{0, 0, 0};
    // Populated by infer_shapes, keyed by EdgeRef::key().
    std::map<std::string, TensorShape> edge_shapes;

    const NodeSpec& node(const std::string& id) const;
    bool has_node(const std::string& id) const;

    // Edges in deterministic order: consumers in declaration order,
    // input slots in declaration order.
    std::vector<EdgeRef> edges() const;
    std::vector<EdgeRef> input_edges(const std::string& id) const;
    // Outgoing edges of a node, ordered by consumer declaration.
    std::vector<EdgeRef> output_edges(const std::string& id) const;

    // Node ids in topological order (stable wrt declaration order).
    // Throws GraphError on a cycle.
    std::vector<std::string> topo_order() const;

    TensorShape edge_shape(const EdgeRef& e) const;
    TensorShape edge_shape(const std::string& key) const;

    // Input edge shape of a single-input node (first input for merge kinds).
    TensorShape in_shape(const NodeSpec& n) const;
    // Output shape of a node (shape of its first outgoing edge).
    TensorShape out_shape(const NodeSpec& n) const;

    // All input edges of Concat/Add nodes: the skip-buffer decision variables.
    std::vector<EdgeRef> skip_edges() const;

    // Channel range of a Split output edge: [first, first+count) of the input.
    std::pair<int, int> split_range(const EdgeRef& e) const;
};

// Parse the JSON network description. `base_dir` resolves a relative
// `weights_file` reference.
NetworkGraph parse_network(const std::string& text, const std::string& base_dir = "");
NetworkGraph parse_network_file(const std::string& path);

std::string serialize(const NetworkGraph& g);

// Returns a copy with every edge annotated with its shape.
NetworkGraph infer_shapes(const NetworkGraph& g, TensorShape input_shape);

// Empty iff all structural invariants hold. Violations are data, not errors.
std::vector<std::string> validate_graph(const NetworkGraph& g);

// Synthesize any missing weight tensors deterministically (seeded per ref).
void ensure_weights(NetworkGraph& g, std::uint64_t seed);

// Binary weight container, magic "SATW".
void write_weights_file(const std::string& path,
                        const std::map<std::string, WeightTensor>& weights);
std::map<std::string, WeightTensor> read_weights_file(const std::string& path);

// Binary integer tensor container (i32 payload), same framing as SATW with
// dims (1, C, H, W) repurposed as (H, W, C, 1) is avoided: tensors are stored
// with dims (H, W, C, 1).
void write_tensor_file(const std::string& path, const IntTensor& t);
IntTensor read_tensor_file(const std::string& path);

std::uint64_t fnv1a(const void* data, size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace flowmap
