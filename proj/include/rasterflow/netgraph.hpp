#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rasterflow/fields.hpp"
#include "rasterflow/tensor.hpp"

namespace rflow {

enum class OpKind : std::uint8_t {
  input,
  conv2d,
  transposed_conv2d,
  pool,
  activation,
  concat_channels,
  add,
};

enum class PoolKind : std::uint8_t { max, avg };
enum class ActKind : std::uint8_t { relu, sigmoid, tanh, identity };
enum class Padding : std::uint8_t { valid, same };

const char* op_name(OpKind k);

// One node of a model graph. Parameters are kept flat; which fields are
// meaningful depends on `op`.
struct GraphNode {
  int id = -1;
  OpKind op = OpKind::input;
  std::vector<int> inputs;

  std::string name;              // input: placeholder name
  std::int64_t channels = 0;     // input: declared channel count
  Size2 kernel{1, 1};            // conv2d / transposed_conv2d
  Size2 window{1, 1};            // pool
  Size2 stride{1, 1};            // conv2d / transposed_conv2d / pool
  Padding padding = Padding::valid;  // conv2d only; everything else is valid
  PoolKind pool = PoolKind::max;
  ActKind act = ActKind::identity;
  std::int64_t in_channels = 0;   // conv2d / transposed_conv2d
  std::int64_t out_channels = 0;  // conv2d / transposed_conv2d
  bool use_bias = true;

  // Kernel layout is [kh][kw][in_ch][out_ch] row-major; bias is [out_ch].
  std::vector<float> weights;
  std::vector<float> bias;

  std::string label() const { return std::string(op_name(op)) + "#" + std::to_string(id); }
};

// Directed acyclic graph of tensor operations with named inputs and outputs.
// Nodes are stored in topological order (every edge points backwards) and the
// graph is immutable once built, so it can be shared across threads.
//
// On disk a graph is the pair `name.ngraph.json` (topology and per-node
// parameters, including `weights_offset` in bytes and `weights_len` in f32
// values into the blob) and `name.ngraph.bin` (concatenated little-endian
// f32 weight blocks, kernel values first, then bias when present).
class ModelGraph {
 public:
  ModelGraph(std::vector<GraphNode> nodes, std::map<std::string, int> inputs,
             std::map<std::string, int> outputs);

  static ModelGraph load(const std::string& json_path);
  void save(const std::string& json_path) const;

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::map<std::string, int>& inputs() const { return inputs_; }
  const std::map<std::string, int>& outputs() const { return outputs_; }

  const GraphNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::int64_t input_channels(const std::string& name) const;
  bool uses_same_padding() const;

  // Runs the graph. Execution is deterministic: node order, loop order and
  // accumulation order are fixed, so identical inputs give bit-identical
  // outputs. Intermediate tensors are freed as soon as their last consumer
  // has run. Throws ShapeError naming the offending node on any mismatch.
  std::map<std::string, Tensor> forward(std::map<std::string, Tensor> inputs) const;

 private:
  std::vector<GraphNode> nodes_;
  std::map<std::string, int> inputs_;
  std::map<std::string, int> outputs_;
};

// Builder used by tools and tests. add_* return the node id.
class GraphBuilder {
 public:
  int add_input(const std::string& name, std::int64_t channels);
  int add_conv2d(int input, const Size2& kernel, const Size2& stride, Padding padding,
                 std::int64_t in_channels, std::int64_t out_channels, std::vector<float> weights,
                 std::vector<float> bias);
  int add_transposed_conv2d(int input, const Size2& kernel, const Size2& stride,
                            std::int64_t in_channels, std::int64_t out_channels,
                            std::vector<float> weights, std::vector<float> bias);
  int add_pool(int input, PoolKind kind, const Size2& window, const Size2& stride);
  int add_activation(int input, ActKind kind);
  int add_concat(const std::vector<int>& inputs);
  int add_add(int a, int b);
  void mark_output(const std::string& name, int node);

  ModelGraph build();

 private:
  int push(GraphNode node);
  std::vector<GraphNode> nodes_;
  std::map<std::string, int> inputs_;
  std::map<std::string, int> outputs_;
};

// Spatial shape inference for every node given per-input shapes.
// Index i holds node i's output shape.
std::vector<TensorShape> infer_shapes(const ModelGraph& graph,
                                      const std::map<std::string, TensorShape>& inputs);

// Dependency trace of one output axis onto one input axis, valid padding,
// away from image borders:
//
//   start(o) = grid * floor(o / period) + start_tab[o % period]
//   end(o)   = start(o) + width_tab[o % period] - 1      (inclusive)
//
// start(0) == 0 and start is nondecreasing. `period` is minimal, so the
// smallest output step with a uniform input shift is `period` itself (the
// expression field of this axis), and the shift per period (`grid`) is the
// integer block stride.
struct AxisTrace {
  std::int64_t period = 1;
  std::int64_t grid = 1;
  std::vector<std::int64_t> start_tab{0};
  std::vector<std::int64_t> width_tab{1};

  std::int64_t start(std::int64_t o) const;
  std::int64_t end(std::int64_t o) const;
  Ratio scale() const { return Ratio::of(grid, period); }

  friend bool operator==(const AxisTrace& a, const AxisTrace& b) {
    return a.period == b.period && a.grid == b.grid && a.start_tab == b.start_tab &&
           a.width_tab == b.width_tab;
  }
};

// Per-input dependency traces of one graph output. Inputs the output does
// not depend on are absent.
struct OutputTraces {
  std::map<std::string, AxisTrace> rows;
  std::map<std::string, AxisTrace> cols;
};

OutputTraces derive_traces(const ModelGraph& graph, const std::string& output);

// Derives receptive fields, expression field and scale factor of `output`
// with respect to `reference_input` by exact composition of per-op
// dependency windows. The expression field is the minimal block size; the
// step (expression * scale) is integral by construction.
//
// Supported ops: valid-padding conv2d, pool, activation, concat, add, and
// transposed_conv2d with kernel == stride. Throws SpecError for same
// padding, other transposed kernels, or branches that merge with
// inconsistent window geometry.
FieldSpec derive_fields(const ModelGraph& graph, const std::string& reference_input,
                        const std::string& output);

// Outcome of checking a declared FieldSpec against a graph.
struct FieldValidation {
  bool shape_r_ok = false;     // inputs of size rf produce exactly one ef block
  bool shape_rd_ok = false;    // inputs of size rf+step produce two ef blocks
  bool derived_available = false;
  bool derived_matches = false;
  std::optional<FieldSpec> derived;
  std::vector<std::string> messages;

  // Full consistency, required for fully-convolutional serving.
  bool pass() const {
    return shape_r_ok && shape_rd_ok && (!derived_available || derived_matches);
  }
  // Patch-shape consistency, sufficient for patch-based serving.
  bool patch_ok() const { return shape_r_ok; }
};

FieldValidation validate_fields(const ModelGraph& graph, const std::string& output,
                                const FieldSpec& declared);

// Peak of the summed live tensor bytes over the graph's execution schedule:
// while a node runs, its inputs, its output, and every earlier tensor still
// awaiting a consumer are live. Weights are a fixed cost and excluded.
std::int64_t peak_intermediate_bytes(const ModelGraph& graph,
                                     const std::map<std::string, TensorShape>& inputs);

}  // namespace rflow
