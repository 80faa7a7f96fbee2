#include "rasterflow/netgraph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "rasterflow/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "ngraph weight blobs assume a little-endian host");

namespace rflow {

namespace {

using nlohmann::json;

std::int64_t ceil_div_pos(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void check_positive(const GraphNode& nd, const Size2& s, const char* what) {
  if (s.rows < 1 || s.cols < 1) {
    throw SpecError(nd.label() + ": " + what + " must be positive, got " + to_string(s));
  }
}

void check_finite(const GraphNode& nd, const std::vector<float>& v, const char* what) {
  for (float x : v) {
    if (!std::isfinite(x)) throw SpecError(nd.label() + ": non-finite " + what + " value");
  }
}

void validate_node(const GraphNode& nd, std::size_t index) {
  if (nd.id != static_cast<int>(index)) {
    throw SpecError("node ids must equal their position; node " + std::to_string(index) +
                    " has id " + std::to_string(nd.id));
  }
  for (int in : nd.inputs) {
    if (in < 0 || in >= nd.id) {
      throw SpecError(nd.label() + ": input id " + std::to_string(in) +
                      " does not reference an earlier node");
    }
  }
  auto want_inputs = [&](std::size_t n) {
    if (nd.inputs.size() != n) {
      throw SpecError(nd.label() + ": expects " + std::to_string(n) + " input(s), has " +
                      std::to_string(nd.inputs.size()));
    }
  };
  switch (nd.op) {
    case OpKind::input:
      want_inputs(0);
      if (nd.name.empty()) throw SpecError(nd.label() + ": input node needs a name");
      if (nd.channels < 1) throw SpecError(nd.label() + ": channel count must be positive");
      break;
    case OpKind::conv2d:
    case OpKind::transposed_conv2d: {
      want_inputs(1);
      check_positive(nd, nd.kernel, "kernel");
      check_positive(nd, nd.stride, "stride");
      if (nd.in_channels < 1 || nd.out_channels < 1) {
        throw SpecError(nd.label() + ": channel counts must be positive");
      }
      if (nd.op == OpKind::transposed_conv2d && nd.padding != Padding::valid) {
        throw SpecError(nd.label() + ": transposed conv supports valid padding only");
      }
      const auto want = static_cast<std::size_t>(nd.kernel.rows * nd.kernel.cols *
                                                 nd.in_channels * nd.out_channels);
      if (nd.weights.size() != want) {
        throw SpecError(nd.label() + ": kernel expects " + std::to_string(want) +
                        " weights, got " + std::to_string(nd.weights.size()));
      }
      const auto want_bias = static_cast<std::size_t>(nd.use_bias ? nd.out_channels : 0);
      if (nd.bias.size() != want_bias) {
        throw SpecError(nd.label() + ": expects " + std::to_string(want_bias) +
                        " bias values, got " + std::to_string(nd.bias.size()));
      }
      check_finite(nd, nd.weights, "kernel");
      check_finite(nd, nd.bias, "bias");
      break;
    }
    case OpKind::pool:
      want_inputs(1);
      check_positive(nd, nd.window, "window");
      check_positive(nd, nd.stride, "stride");
      break;
    case OpKind::activation:
      want_inputs(1);
      break;
    case OpKind::concat_channels:
      if (nd.inputs.empty()) throw SpecError(nd.label() + ": concat needs inputs");
      break;
    case OpKind::add:
      want_inputs(2);
      break;
  }
}

}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::conv2d: return "conv2d";
    case OpKind::transposed_conv2d: return "transposed_conv2d";
    case OpKind::pool: return "pool";
    case OpKind::activation: return "activation";
    case OpKind::concat_channels: return "concat_channels";
    case OpKind::add: return "add";
  }
  return "?";
}

std::string to_string(const TensorShape& s) {
  return std::to_string(s.batch) + "x" + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
         "x" + std::to_string(s.channels);
}

ModelGraph::ModelGraph(std::vector<GraphNode> nodes, std::map<std::string, int> inputs,
                       std::map<std::string, int> outputs)
    : nodes_(std::move(nodes)), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  if (nodes_.empty()) throw SpecError("model graph has no nodes");
  std::size_t input_nodes = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    validate_node(nodes_[i], i);
    if (nodes_[i].op == OpKind::input) {
      ++input_nodes;
      auto it = inputs_.find(nodes_[i].name);
      if (it == inputs_.end() || it->second != nodes_[i].id) {
        throw SpecError("input node '" + nodes_[i].name + "' is not listed in the input map");
      }
    }
  }
  if (inputs_.size() != input_nodes) {
    throw SpecError("input map names " + std::to_string(inputs_.size()) + " inputs, graph has " +
                    std::to_string(input_nodes) + " input nodes");
  }
  if (outputs_.empty()) throw SpecError("model graph declares no outputs");
  for (const auto& [name, id] : outputs_) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw SpecError("output '" + name + "' references invalid node " + std::to_string(id));
    }
  }
}

std::int64_t ModelGraph::input_channels(const std::string& name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw SpecError("model has no input named '" + name + "'");
  return nodes_[static_cast<std::size_t>(it->second)].channels;
}

bool ModelGraph::uses_same_padding() const {
  for (const auto& nd : nodes_) {
    if (nd.op == OpKind::conv2d && nd.padding == Padding::same) return true;
  }
  return false;
}

std::vector<TensorShape> infer_shapes(const ModelGraph& graph,
                                      const std::map<std::string, TensorShape>& inputs) {
  const auto& nodes = graph.nodes();
  std::vector<TensorShape> shapes(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& nd = nodes[i];
    auto in_shape = [&](std::size_t k) -> const TensorShape& {
      return shapes[static_cast<std::size_t>(nd.inputs[k])];
    };
    switch (nd.op) {
      case OpKind::input: {
        auto it = inputs.find(nd.name);
        if (it == inputs.end()) {
          throw ShapeError(nd.label() + ": no shape provided for input '" + nd.name + "'");
        }
        const TensorShape& s = it->second;
        if (s.batch < 1 || s.rows < 1 || s.cols < 1) {
          throw ShapeError(nd.label() + ": input '" + nd.name + "' is empty: " + to_string(s));
        }
        if (s.channels != nd.channels) {
          throw ShapeError(nd.label() + ": input '" + nd.name + "' expects " +
                           std::to_string(nd.channels) + " channels, got " +
                           std::to_string(s.channels));
        }
        shapes[i] = s;
        break;
      }
      case OpKind::conv2d: {
        const TensorShape& a = in_shape(0);
        if (a.channels != nd.in_channels) {
          throw ShapeError(nd.label() + ": expects " + std::to_string(nd.in_channels) +
                           " input channels, got " + std::to_string(a.channels));
        }
        std::int64_t rows = 0;
        std::int64_t cols = 0;
        if (nd.padding == Padding::valid) {
          if (a.rows < nd.kernel.rows || a.cols < nd.kernel.cols) {
            throw ShapeError(nd.label() + ": input " + std::to_string(a.rows) + "x" +
                             std::to_string(a.cols) + " is smaller than kernel " +
                             to_string(nd.kernel));
          }
          rows = (a.rows - nd.kernel.rows) / nd.stride.rows + 1;
          cols = (a.cols - nd.kernel.cols) / nd.stride.cols + 1;
        } else {
          rows = ceil_div_pos(a.rows, nd.stride.rows);
          cols = ceil_div_pos(a.cols, nd.stride.cols);
        }
        shapes[i] = TensorShape{a.batch, rows, cols, nd.out_channels};
        break;
      }
      case OpKind::transposed_conv2d: {
        const TensorShape& a = in_shape(0);
        if (a.channels != nd.in_channels) {
          throw ShapeError(nd.label() + ": expects " + std::to_string(nd.in_channels) +
                           " input channels, got " + std::to_string(a.channels));
        }
        shapes[i] = TensorShape{a.batch, (a.rows - 1) * nd.stride.rows + nd.kernel.rows,
                                (a.cols - 1) * nd.stride.cols + nd.kernel.cols, nd.out_channels};
        break;
      }
      case OpKind::pool: {
        const TensorShape& a = in_shape(0);
        if (a.rows < nd.window.rows || a.cols < nd.window.cols) {
          throw ShapeError(nd.label() + ": input " + std::to_string(a.rows) + "x" +
                           std::to_string(a.cols) + " is smaller than window " +
                           to_string(nd.window));
        }
        shapes[i] = TensorShape{a.batch, (a.rows - nd.window.rows) / nd.stride.rows + 1,
                                (a.cols - nd.window.cols) / nd.stride.cols + 1, a.channels};
        break;
      }
      case OpKind::activation:
        shapes[i] = in_shape(0);
        break;
      case OpKind::concat_channels: {
        TensorShape s = in_shape(0);
        for (std::size_t k = 1; k < nd.inputs.size(); ++k) {
          const TensorShape& a = in_shape(k);
          if (a.batch != s.batch || a.rows != s.rows || a.cols != s.cols) {
            throw ShapeError(nd.label() + ": cannot concat " + to_string(s) + " with " +
                             to_string(a));
          }
          s.channels += a.channels;
        }
        shapes[i] = s;
        break;
      }
      case OpKind::add: {
        const TensorShape& a = in_shape(0);
        const TensorShape& b = in_shape(1);
        if (a != b) {
          throw ShapeError(nd.label() + ": cannot add " + to_string(a) + " and " + to_string(b));
        }
        shapes[i] = a;
        break;
      }
    }
  }
  return shapes;
}

namespace {

// Taps accumulate in fixed (ki, kj, ic) order into per-channel double
// accumulators, so a given output value is bit-identical wherever its full
// receptive window is present.
Tensor conv2d_forward(const GraphNode& nd, const Tensor& in, const TensorShape& os) {
  const TensorShape& is = in.shape();
  const std::int64_t kh = nd.kernel.rows, kw = nd.kernel.cols;
  const std::int64_t sr = nd.stride.rows, sc = nd.stride.cols;
  const std::int64_t ic_n = nd.in_channels, oc_n = nd.out_channels;
  std::int64_t pad_top = 0, pad_left = 0;
  if (nd.padding == Padding::same) {
    pad_top = std::max<std::int64_t>((os.rows - 1) * sr + kh - is.rows, 0) / 2;
    pad_left = std::max<std::int64_t>((os.cols - 1) * sc + kw - is.cols, 0) / 2;
  }
  Tensor out(os);
  std::vector<double> acc(static_cast<std::size_t>(oc_n));
  for (std::int64_t b = 0; b < os.batch; ++b) {
    for (std::int64_t orow = 0; orow < os.rows; ++orow) {
      for (std::int64_t ocol = 0; ocol < os.cols; ++ocol) {
        for (std::int64_t oc = 0; oc < oc_n; ++oc) {
          acc[static_cast<std::size_t>(oc)] = nd.use_bias ? nd.bias[static_cast<std::size_t>(oc)] : 0.0;
        }
        const std::int64_t i0 = orow * sr - pad_top;
        const std::int64_t j0 = ocol * sc - pad_left;
        for (std::int64_t ki = 0; ki < kh; ++ki) {
          const std::int64_t ir = i0 + ki;
          if (ir < 0 || ir >= is.rows) continue;
          for (std::int64_t kj = 0; kj < kw; ++kj) {
            const std::int64_t jc = j0 + kj;
            if (jc < 0 || jc >= is.cols) continue;
            const float* px = in.data() + ((b * is.rows + ir) * is.cols + jc) * ic_n;
            const float* wr = nd.weights.data() + (ki * kw + kj) * ic_n * oc_n;
            for (std::int64_t ic = 0; ic < ic_n; ++ic) {
              const double v = px[ic];
              const float* w = wr + ic * oc_n;
              for (std::int64_t oc = 0; oc < oc_n; ++oc) {
                acc[static_cast<std::size_t>(oc)] += v * w[oc];
              }
            }
          }
        }
        float* dst = out.data() + ((b * os.rows + orow) * os.cols + ocol) * oc_n;
        for (std::int64_t oc = 0; oc < oc_n; ++oc) {
          dst[oc] = static_cast<float>(acc[static_cast<std::size_t>(oc)]);
        }
      }
    }
  }
  return out;
}

Tensor tconv_forward(const GraphNode& nd, const Tensor& in, const TensorShape& os) {
  const TensorShape& is = in.shape();
  const std::int64_t kh = nd.kernel.rows, kw = nd.kernel.cols;
  const std::int64_t sr = nd.stride.rows, sc = nd.stride.cols;
  const std::int64_t ic_n = nd.in_channels, oc_n = nd.out_channels;
  Tensor out(os);
  std::vector<double> acc(static_cast<std::size_t>(oc_n));
  for (std::int64_t b = 0; b < os.batch; ++b) {
    for (std::int64_t orow = 0; orow < os.rows; ++orow) {
      for (std::int64_t ocol = 0; ocol < os.cols; ++ocol) {
        for (std::int64_t oc = 0; oc < oc_n; ++oc) {
          acc[static_cast<std::size_t>(oc)] = nd.use_bias ? nd.bias[static_cast<std::size_t>(oc)] : 0.0;
        }
        for (std::int64_t ki = 0; ki < kh; ++ki) {
          const std::int64_t ti = orow - ki;
          if (ti < 0 || ti % sr != 0) continue;
          const std::int64_t ir = ti / sr;
          if (ir >= is.rows) continue;
          for (std::int64_t kj = 0; kj < kw; ++kj) {
            const std::int64_t tj = ocol - kj;
            if (tj < 0 || tj % sc != 0) continue;
            const std::int64_t jc = tj / sc;
            if (jc >= is.cols) continue;
            const float* px = in.data() + ((b * is.rows + ir) * is.cols + jc) * ic_n;
            const float* wr = nd.weights.data() + (ki * kw + kj) * ic_n * oc_n;
            for (std::int64_t ic = 0; ic < ic_n; ++ic) {
              const double v = px[ic];
              const float* w = wr + ic * oc_n;
              for (std::int64_t oc = 0; oc < oc_n; ++oc) {
                acc[static_cast<std::size_t>(oc)] += v * w[oc];
              }
            }
          }
        }
        float* dst = out.data() + ((b * os.rows + orow) * os.cols + ocol) * oc_n;
        for (std::int64_t oc = 0; oc < oc_n; ++oc) {
          dst[oc] = static_cast<float>(acc[static_cast<std::size_t>(oc)]);
        }
      }
    }
  }
  return out;
}

Tensor pool_forward(const GraphNode& nd, const Tensor& in, const TensorShape& os) {
  const TensorShape& is = in.shape();
  const std::int64_t wh = nd.window.rows, wc = nd.window.cols;
  const std::int64_t sr = nd.stride.rows, sc = nd.stride.cols;
  const std::int64_t ch = is.channels;
  const double inv_count = 1.0 / static_cast<double>(wh * wc);
  Tensor out(os);
  for (std::int64_t b = 0; b < os.batch; ++b) {
    for (std::int64_t orow = 0; orow < os.rows; ++orow) {
      for (std::int64_t ocol = 0; ocol < os.cols; ++ocol) {
        const std::int64_t i0 = orow * sr;
        const std::int64_t j0 = ocol * sc;
        float* dst = out.data() + ((b * os.rows + orow) * os.cols + ocol) * ch;
        for (std::int64_t c = 0; c < ch; ++c) {
          if (nd.pool == PoolKind::max) {
            float m = in.at(b, i0, j0, c);
            for (std::int64_t wi = 0; wi < wh; ++wi) {
              for (std::int64_t wj = 0; wj < wc; ++wj) {
                m = std::max(m, in.at(b, i0 + wi, j0 + wj, c));
              }
            }
            dst[c] = m;
          } else {
            double sum = 0.0;
            for (std::int64_t wi = 0; wi < wh; ++wi) {
              for (std::int64_t wj = 0; wj < wc; ++wj) {
                sum += in.at(b, i0 + wi, j0 + wj, c);
              }
            }
            dst[c] = static_cast<float>(sum * inv_count);
          }
        }
      }
    }
  }
  return out;
}

Tensor act_forward(const GraphNode& nd, const Tensor& in) {
  Tensor out(in.shape());
  const float* src = in.data();
  float* dst = out.data();
  const std::int64_t n = in.count();
  switch (nd.act) {
    case ActKind::relu:
      for (std::int64_t i = 0; i < n; ++i) dst[i] = src[i] < 0.0f ? 0.0f : src[i];
      break;
    case ActKind::sigmoid:
      for (std::int64_t i = 0; i < n; ++i) {
        dst[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(src[i]))));
      }
      break;
    case ActKind::tanh:
      for (std::int64_t i = 0; i < n; ++i) {
        dst[i] = static_cast<float>(std::tanh(static_cast<double>(src[i])));
      }
      break;
    case ActKind::identity:
      std::memcpy(dst, src, static_cast<std::size_t>(n) * sizeof(float));
      break;
  }
  return out;
}

Tensor concat_forward(const std::vector<const Tensor*>& parts, const TensorShape& os) {
  Tensor out(os);
  const std::int64_t pixels = os.batch * os.rows * os.cols;
  std::int64_t ch_off = 0;
  for (const Tensor* p : parts) {
    const std::int64_t pch = p->shape().channels;
    const float* src = p->data();
    float* dst = out.data() + ch_off;
    for (std::int64_t px = 0; px < pixels; ++px) {
      std::memcpy(dst + px * os.channels, src + px * pch,
                  static_cast<std::size_t>(pch) * sizeof(float));
    }
    ch_off += pch;
  }
  return out;
}

Tensor add_forward(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* dst = out.data();
  const std::int64_t n = a.count();
  for (std::int64_t i = 0; i < n; ++i) dst[i] = pa[i] + pb[i];
  return out;
}

}  // namespace

std::map<std::string, Tensor> ModelGraph::forward(std::map<std::string, Tensor> inputs) const {
  for (const auto& [name, t] : inputs) {
    if (!inputs_.count(name)) throw ShapeError("forward got unknown input '" + name + "'");
  }
  std::map<std::string, TensorShape> in_shapes;
  for (const auto& [name, id] : inputs_) {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw ShapeError("forward misses input '" + name + "'");
    in_shapes[name] = it->second.shape();
  }
  const std::vector<TensorShape> shapes = infer_shapes(*this, in_shapes);

  std::vector<int> pending(nodes_.size(), 0);
  for (const auto& nd : nodes_) {
    for (int in : nd.inputs) ++pending[static_cast<std::size_t>(in)];
  }
  for (const auto& [name, id] : outputs_) ++pending[static_cast<std::size_t>(id)];

  std::vector<Tensor> values(nodes_.size());
  for (const auto& [name, id] : inputs_) {
    values[static_cast<std::size_t>(id)] = std::move(inputs.at(name));
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const GraphNode& nd = nodes_[i];
    switch (nd.op) {
      case OpKind::input:
        break;
      case OpKind::conv2d:
        values[i] = conv2d_forward(nd, values[static_cast<std::size_t>(nd.inputs[0])], shapes[i]);
        break;
      case OpKind::transposed_conv2d:
        values[i] = tconv_forward(nd, values[static_cast<std::size_t>(nd.inputs[0])], shapes[i]);
        break;
      case OpKind::pool:
        values[i] = pool_forward(nd, values[static_cast<std::size_t>(nd.inputs[0])], shapes[i]);
        break;
      case OpKind::activation:
        values[i] = act_forward(nd, values[static_cast<std::size_t>(nd.inputs[0])]);
        break;
      case OpKind::concat_channels: {
        std::vector<const Tensor*> parts;
        parts.reserve(nd.inputs.size());
        for (int in : nd.inputs) parts.push_back(&values[static_cast<std::size_t>(in)]);
        values[i] = concat_forward(parts, shapes[i]);
        break;
      }
      case OpKind::add:
        values[i] = add_forward(values[static_cast<std::size_t>(nd.inputs[0])],
                                values[static_cast<std::size_t>(nd.inputs[1])]);
        break;
    }
    for (int in : nd.inputs) {
      if (--pending[static_cast<std::size_t>(in)] == 0) {
        values[static_cast<std::size_t>(in)].release();
      }
    }
    if (pending[i] == 0) values[i].release();
  }

  std::map<std::string, Tensor> result;
  for (const auto& [name, id] : outputs_) {
    const std::size_t idx = static_cast<std::size_t>(id);
    if (--pending[idx] == 0) {
      result.emplace(name, std::move(values[idx]));
    } else {
      result.emplace(name, values[idx]);
    }
  }
  return result;
}

int GraphBuilder::push(GraphNode node) {
  node.id = static_cast<int>(nodes_.size());
  for (int in : node.inputs) {
    if (in < 0 || in >= node.id) {
      throw SpecError("builder: input id " + std::to_string(in) + " does not exist yet");
    }
  }
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

int GraphBuilder::add_input(const std::string& name, std::int64_t channels) {
  if (inputs_.count(name)) throw SpecError("builder: duplicate input name '" + name + "'");
  GraphNode nd;
  nd.op = OpKind::input;
  nd.name = name;
  nd.channels = channels;
  const int id = push(std::move(nd));
  inputs_[name] = id;
  return id;
}

int GraphBuilder::add_conv2d(int input, const Size2& kernel, const Size2& stride, Padding padding,
                             std::int64_t in_channels, std::int64_t out_channels,
                             std::vector<float> weights, std::vector<float> bias) {
  GraphNode nd;
  nd.op = OpKind::conv2d;
  nd.inputs = {input};
  nd.kernel = kernel;
  nd.stride = stride;
  nd.padding = padding;
  nd.in_channels = in_channels;
  nd.out_channels = out_channels;
  nd.use_bias = !bias.empty();
  nd.weights = std::move(weights);
  nd.bias = std::move(bias);
  return push(std::move(nd));
}

int GraphBuilder::add_transposed_conv2d(int input, const Size2& kernel, const Size2& stride,
                                        std::int64_t in_channels, std::int64_t out_channels,
                                        std::vector<float> weights, std::vector<float> bias) {
  GraphNode nd;
  nd.op = OpKind::transposed_conv2d;
  nd.inputs = {input};
  nd.kernel = kernel;
  nd.stride = stride;
  nd.in_channels = in_channels;
  nd.out_channels = out_channels;
  nd.use_bias = !bias.empty();
  nd.weights = std::move(weights);
  nd.bias = std::move(bias);
  return push(std::move(nd));
}

int GraphBuilder::add_pool(int input, PoolKind kind, const Size2& window, const Size2& stride) {
  GraphNode nd;
  nd.op = OpKind::pool;
  nd.inputs = {input};
  nd.pool = kind;
  nd.window = window;
  nd.stride = stride;
  return push(std::move(nd));
}

int GraphBuilder::add_activation(int input, ActKind kind) {
  GraphNode nd;
  nd.op = OpKind::activation;
  nd.inputs = {input};
  nd.act = kind;
  return push(std::move(nd));
}

int GraphBuilder::add_concat(const std::vector<int>& inputs) {
  GraphNode nd;
  nd.op = OpKind::concat_channels;
  nd.inputs = inputs;
  return push(std::move(nd));
}

int GraphBuilder::add_add(int a, int b) {
  GraphNode nd;
  nd.op = OpKind::add;
  nd.inputs = {a, b};
  return push(std::move(nd));
}

void GraphBuilder::mark_output(const std::string& name, int node) {
  if (outputs_.count(name)) throw SpecError("builder: duplicate output name '" + name + "'");
  if (node < 0 || node >= static_cast<int>(nodes_.size())) {
    throw SpecError("builder: output '" + name + "' references invalid node");
  }
  outputs_[name] = node;
}

ModelGraph GraphBuilder::build() {
  return ModelGraph(std::move(nodes_), std::move(inputs_), std::move(outputs_));
}

namespace {

std::string bin_path_for(const std::string& json_path) {
  const std::string suffix = ".json";
  if (json_path.size() > suffix.size() &&
      json_path.compare(json_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return json_path.substr(0, json_path.size() - suffix.size()) + ".bin";
  }
  return json_path + ".bin";
}

const json& require_field(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw IoError("model '" + path + "': missing field '" + key + "'");
  return *it;
}

json size2_to_json(const Size2& s) { return json::array({s.rows, s.cols}); }

Size2 size2_from_json(const json& j, const char* what, const std::string& path) {
  if (!j.is_array() || j.size() != 2) {
    throw IoError("model '" + path + "': field '" + what + "' must be a [rows, cols] pair");
  }
  return Size2{j[0].get<std::int64_t>(), j[1].get<std::int64_t>()};
}

OpKind op_from_name(const std::string& s, const std::string& path) {
  for (OpKind k : {OpKind::input, OpKind::conv2d, OpKind::transposed_conv2d, OpKind::pool,
                   OpKind::activation, OpKind::concat_channels, OpKind::add}) {
    if (s == op_name(k)) return k;
  }
  throw IoError("model '" + path + "': unknown op '" + s + "'");
}

std::vector<float> read_blob(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight blob '" + path + "'");
  f.seekg(0, std::ios::end);
  const std::streamoff bytes = f.tellg();
  if (bytes < 0 || bytes % 4 != 0) {
    throw IoError("weight blob '" + path + "' is not a whole number of f32 values");
  }
  std::vector<float> blob(static_cast<std::size_t>(bytes / 4));
  f.seekg(0, std::ios::beg);
  if (!blob.empty() &&
      !f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes))) {
    throw IoError("cannot read weight blob '" + path + "'");
  }
  return blob;
}

}  // namespace

ModelGraph ModelGraph::load(const std::string& json_path) {
  std::ifstream f(json_path);
  if (!f) throw IoError("cannot open model '" + json_path + "'");
  json doc;
  try {
    f >> doc;
  } catch (const json::exception& e) {
    throw IoError("model '" + json_path + "' is not valid JSON: " + e.what());
  }
  if (require_field(doc, "format", json_path).get<std::string>() != "ngraph/1") {
    throw IoError("model '" + json_path + "' has unsupported format tag");
  }
  const std::vector<float> blob = read_blob(bin_path_for(json_path));

  std::vector<GraphNode> nodes;
  for (const json& jn : require_field(doc, "nodes", json_path)) {
    GraphNode nd;
    nd.id = require_field(jn, "id", json_path).get<int>();
    nd.op = op_from_name(require_field(jn, "op", json_path).get<std::string>(), json_path);
    if (nd.op != OpKind::input) {
      nd.inputs = require_field(jn, "inputs", json_path).get<std::vector<int>>();
    }
    switch (nd.op) {
      case OpKind::input:
        nd.name = require_field(jn, "name", json_path).get<std::string>();
        nd.channels = require_field(jn, "channels", json_path).get<std::int64_t>();
        break;
      case OpKind::conv2d:
      case OpKind::transposed_conv2d: {
        nd.kernel = size2_from_json(require_field(jn, "kernel", json_path), "kernel", json_path);
        nd.stride = size2_from_json(require_field(jn, "stride", json_path), "stride", json_path);
        if (nd.op == OpKind::conv2d) {
          const std::string p = require_field(jn, "padding", json_path).get<std::string>();
          if (p == "valid") {
            nd.padding = Padding::valid;
          } else if (p == "same") {
            nd.padding = Padding::same;
          } else {
            throw IoError("model '" + json_path + "': unknown padding '" + p + "'");
          }
        }
        nd.in_channels = require_field(jn, "in_channels", json_path).get<std::int64_t>();
        nd.out_channels = require_field(jn, "out_channels", json_path).get<std::int64_t>();
        nd.use_bias = require_field(jn, "use_bias", json_path).get<bool>();
        const std::int64_t offset = require_field(jn, "weights_offset", json_path).get<std::int64_t>();
        const std::int64_t len = require_field(jn, "weights_len", json_path).get<std::int64_t>();
        const std::int64_t kernel_n =
            nd.kernel.rows * nd.kernel.cols * nd.in_channels * nd.out_channels;
        const std::int64_t bias_n = nd.use_bias ? nd.out_channels : 0;
        if (offset < 0 || offset % 4 != 0 || len != kernel_n + bias_n ||
            offset / 4 + len > static_cast<std::int64_t>(blob.size())) {
          throw IoError("model '" + json_path + "': node " + std::to_string(nd.id) +
                        " has an invalid weight slice");
        }
        const float* base = blob.data() + offset / 4;
        nd.weights.assign(base, base + kernel_n);
        nd.bias.assign(base + kernel_n, base + kernel_n + bias_n);
        break;
      }
      case OpKind::pool: {
        const std::string k = require_field(jn, "kind", json_path).get<std::string>();
        if (k == "max") {
          nd.pool = PoolKind::max;
        } else if (k == "avg") {
          nd.pool = PoolKind::avg;
        } else {
          throw IoError("model '" + json_path + "': unknown pool kind '" + k + "'");
        }
        nd.window = size2_from_json(require_field(jn, "window", json_path), "window", json_path);
        nd.stride = size2_from_json(require_field(jn, "stride", json_path), "stride", json_path);
        break;
      }
      case OpKind::activation: {
        const std::string k = require_field(jn, "kind", json_path).get<std::string>();
        if (k == "relu") {
          nd.act = ActKind::relu;
        } else if (k == "sigmoid") {
          nd.act = ActKind::sigmoid;
        } else if (k == "tanh") {
          nd.act = ActKind::tanh;
        } else if (k == "identity") {
          nd.act = ActKind::identity;
        } else {
          throw IoError("model '" + json_path + "': unknown activation '" + k + "'");
        }
        break;
      }
      case OpKind::concat_channels:
      case OpKind::add:
        break;
    }
    nodes.push_back(std::move(nd));
  }

  std::map<std::string, int> inputs;
  for (const auto& [name, id] : require_field(doc, "inputs", json_path).items()) {
    inputs[name] = id.get<int>();
  }
  std::map<std::string, int> outputs;
  for (const auto& [name, id] : require_field(doc, "outputs", json_path).items()) {
    outputs[name] = id.get<int>();
  }
  return ModelGraph(std::move(nodes), std::move(inputs), std::move(outputs));
}

void ModelGraph::save(const std::string& json_path) const {
  json doc;
  doc["format"] = "ngraph/1";
  doc["inputs"] = json::object();
  for (const auto& [name, id] : inputs_) doc["inputs"][name] = id;
  doc["outputs"] = json::object();
  for (const auto& [name, id] : outputs_) doc["outputs"][name] = id;

  std::vector<float> blob;
  json jnodes = json::array();
  for (const GraphNode& nd : nodes_) {
    json jn;
    jn["id"] = nd.id;
    jn["op"] = op_name(nd.op);
    if (nd.op != OpKind::input) jn["inputs"] = nd.inputs;
    switch (nd.op) {
      case OpKind::input:
        jn["name"] = nd.name;
        jn["channels"] = nd.channels;
        break;
      case OpKind::conv2d:
      case OpKind::transposed_conv2d:
        jn["kernel"] = size2_to_json(nd.kernel);
        jn["stride"] = size2_to_json(nd.stride);
        if (nd.op == OpKind::conv2d) {
          jn["padding"] = nd.padding == Padding::valid ? "valid" : "same";
        }
        jn["in_channels"] = nd.in_channels;
        jn["out_channels"] = nd.out_channels;
        jn["use_bias"] = nd.use_bias;
        jn["weights_offset"] = static_cast<std::int64_t>(blob.size()) * 4;
        jn["weights_len"] = static_cast<std::int64_t>(nd.weights.size() + nd.bias.size());
        blob.insert(blob.end(), nd.weights.begin(), nd.weights.end());
        blob.insert(blob.end(), nd.bias.begin(), nd.bias.end());
        break;
      case OpKind::pool:
        jn["kind"] = nd.pool == PoolKind::max ? "max" : "avg";
        jn["window"] = size2_to_json(nd.window);
        jn["stride"] = size2_to_json(nd.stride);
        break;
      case OpKind::activation:
        switch (nd.act) {
          case ActKind::relu: jn["kind"] = "relu"; break;
          case ActKind::sigmoid: jn["kind"] = "sigmoid"; break;
          case ActKind::tanh: jn["kind"] = "tanh"; break;
          case ActKind::identity: jn["kind"] = "identity"; break;
        }
        break;
      case OpKind::concat_channels:
      case OpKind::add:
        break;
    }
    jnodes.push_back(std::move(jn));
  }
  doc["nodes"] = std::move(jnodes);

  std::ofstream jf(json_path);
  if (!jf) throw IoError("cannot write model '" + json_path + "'");
  jf << doc.dump(2) << "\n";
  if (!jf) throw IoError("failed writing model '" + json_path + "'");

  const std::string bin_path = bin_path_for(json_path);
  std::ofstream bf(bin_path, std::ios::binary);
  if (!bf) throw IoError("cannot write weight blob '" + bin_path + "'");
  if (!blob.empty()) {
    bf.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }
  if (!bf) throw IoError("failed writing weight blob '" + bin_path + "'");
}

std::int64_t AxisTrace::start(std::int64_t o) const {
  return grid * (o / period) + start_tab[static_cast<std::size_t>(o % period)];
}

std::int64_t AxisTrace::end(std::int64_t o) const {
  const std::size_t m = static_cast<std::size_t>(o % period);
  return grid * (o / period) + start_tab[m] + width_tab[m] - 1;
}

namespace {

// Shrinks the trace tables to the smallest period that reproduces them.
AxisTrace minimized(AxisTrace t) {
  for (std::int64_t p = 1; p < t.period; ++p) {
    if (t.period % p != 0) continue;
    const std::int64_t m = t.period / p;
    if (t.grid % m != 0) continue;
    const std::int64_t g = t.grid / m;
    bool ok = true;
    for (std::int64_t o = 0; o < t.period && ok; ++o) {
      const std::size_t r = static_cast<std::size_t>(o % p);
      ok = t.start_tab[static_cast<std::size_t>(o)] == g * (o / p) + t.start_tab[r] &&
           t.width_tab[static_cast<std::size_t>(o)] == t.width_tab[r];
    }
    if (ok) {
      t.period = p;
      t.grid = g;
      t.start_tab.resize(static_cast<std::size_t>(p));
      t.width_tab.resize(static_cast<std::size_t>(p));
      return t;
    }
  }
  return t;
}

// Composes a sliding window (kernel k, stride s) onto an existing trace:
// output o depends on previous outputs [s*o, s*o + k), so the new window is
// start(s*o) .. end(s*o + k - 1). The phase pattern repeats every
// period/gcd(period, s) outputs.
AxisTrace window_compose(const AxisTrace& t, std::int64_t k, std::int64_t s) {
  const std::int64_t p = t.period / std::gcd(t.period, s);
  AxisTrace out;
  out.period = p;
  out.grid = t.grid * (s * p / t.period);
  out.start_tab.resize(static_cast<std::size_t>(p));
  out.width_tab.resize(static_cast<std::size_t>(p));
  for (std::int64_t o = 0; o < p; ++o) {
    const std::int64_t a = t.start(s * o);
    const std::int64_t b = t.end(s * o + k - 1);
    out.start_tab[static_cast<std::size_t>(o)] = a;
    out.width_tab[static_cast<std::size_t>(o)] = b - a + 1;
  }
  return minimized(out);
}

// Transposed conv with kernel == stride: output o depends on the single
// previous output floor(o / s), so s consecutive outputs share one window.
AxisTrace tconv_compose(const AxisTrace& t, std::int64_t s) {
  AxisTrace out;
  out.period = t.period * s;
  out.grid = t.grid;
  out.start_tab.resize(static_cast<std::size_t>(out.period));
  out.width_tab.resize(static_cast<std::size_t>(out.period));
  for (std::int64_t o = 0; o < out.period; ++o) {
    const std::int64_t u = o / s;
    out.start_tab[static_cast<std::size_t>(o)] = t.start(u);
    out.width_tab[static_cast<std::size_t>(o)] = t.end(u) - t.start(u) + 1;
  }
  return minimized(out);
}

using TraceMap = std::map<std::string, AxisTrace>;

TraceMap merge_traces(const std::vector<const TraceMap*>& parts, const GraphNode& nd) {
  TraceMap out;
  for (const TraceMap* part : parts) {
    for (const auto& [name, trace] : *part) {
      auto [it, inserted] = out.emplace(name, trace);
      if (inserted) continue;
      AxisTrace& have = it->second;
      if (have.period != trace.period || have.grid != trace.grid ||
          have.start_tab != trace.start_tab) {
        throw SpecError(nd.label() + ": branches reach input '" + name +
                        "' with inconsistent dependency windows");
      }
      for (std::size_t i = 0; i < have.width_tab.size(); ++i) {
        have.width_tab[i] = std::max(have.width_tab[i], trace.width_tab[i]);
      }
    }
  }
  for (auto& [name, trace] : out) trace = minimized(std::move(trace));
  return out;
}

TraceMap map_compose(const TraceMap& in,
                     const std::function<AxisTrace(const AxisTrace&)>& fn) {
  TraceMap out;
  for (const auto& [name, trace] : in) out.emplace(name, fn(trace));
  return out;
}

}  // namespace

OutputTraces derive_traces(const ModelGraph& graph, const std::string& output) {
  auto out_it = graph.outputs().find(output);
  if (out_it == graph.outputs().end()) {
    throw SpecError("model has no output named '" + output + "'");
  }
  const auto& nodes = graph.nodes();
  std::vector<TraceMap> rows(nodes.size());
  std::vector<TraceMap> cols(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& nd = nodes[i];
    auto in_rows = [&](std::size_t k) -> const TraceMap& {
      return rows[static_cast<std::size_t>(nd.inputs[k])];
    };
    auto in_cols = [&](std::size_t k) -> const TraceMap& {
      return cols[static_cast<std::size_t>(nd.inputs[k])];
    };
    switch (nd.op) {
      case OpKind::input:
        rows[i].emplace(nd.name, AxisTrace{});
        cols[i].emplace(nd.name, AxisTrace{});
        break;
      case OpKind::conv2d:
        if (nd.padding != Padding::valid) {
          throw SpecError(nd.label() + ": field derivation requires valid padding");
        }
        rows[i] = map_compose(in_rows(0), [&](const AxisTrace& t) {
          return window_compose(t, nd.kernel.rows, nd.stride.rows);
        });
        cols[i] = map_compose(in_cols(0), [&](const AxisTrace& t) {
          return window_compose(t, nd.kernel.cols, nd.stride.cols);
        });
        break;
      case OpKind::pool:
        rows[i] = map_compose(in_rows(0), [&](const AxisTrace& t) {
          return window_compose(t, nd.window.rows, nd.stride.rows);
        });
        cols[i] = map_compose(in_cols(0), [&](const AxisTrace& t) {
          return window_compose(t, nd.window.cols, nd.stride.cols);
        });
        break;
      case OpKind::transposed_conv2d:
        if (nd.kernel != nd.stride) {
          throw SpecError(nd.label() +
                          ": field derivation supports transposed conv only when kernel equals "
                          "stride, got kernel " +
                          to_string(nd.kernel) + " stride " + to_string(nd.stride));
        }
        rows[i] = map_compose(in_rows(0), [&](const AxisTrace& t) {
          return tconv_compose(t, nd.stride.rows);
        });
        cols[i] = map_compose(in_cols(0), [&](const AxisTrace& t) {
          return tconv_compose(t, nd.stride.cols);
        });
        break;
      case OpKind::activation:
        rows[i] = in_rows(0);
        cols[i] = in_cols(0);
        break;
      case OpKind::concat_channels:
      case OpKind::add: {
        std::vector<const TraceMap*> row_parts;
        std::vector<const TraceMap*> col_parts;
        for (std::size_t k = 0; k < nd.inputs.size(); ++k) {
          row_parts.push_back(&in_rows(k));
          col_parts.push_back(&in_cols(k));
        }
        rows[i] = merge_traces(row_parts, nd);
        cols[i] = merge_traces(col_parts, nd);
        break;
      }
    }
  }
  const std::size_t out_id = static_cast<std::size_t>(out_it->second);
  return OutputTraces{rows[out_id], cols[out_id]};
}

FieldSpec derive_fields(const ModelGraph& graph, const std::string& reference_input,
                        const std::string& output) {
  if (!graph.inputs().count(reference_input)) {
    throw SpecError("model has no input named '" + reference_input + "'");
  }
  const OutputTraces traces = derive_traces(graph, output);
  auto ref_rows = traces.rows.find(reference_input);
  auto ref_cols = traces.cols.find(reference_input);
  if (ref_rows == traces.rows.end() || ref_cols == traces.cols.end()) {
    throw SpecError("output '" + output + "' does not depend on reference input '" +
                    reference_input + "'");
  }
  std::int64_t e_rows = 1;
  std::int64_t e_cols = 1;
  for (const auto& [name, trace] : traces.rows) e_rows = std::lcm(e_rows, trace.period);
  for (const auto& [name, trace] : traces.cols) e_cols = std::lcm(e_cols, trace.period);

  FieldSpec spec;
  spec.reference = reference_input;
  spec.expression = Size2{e_rows, e_cols};
  spec.scale_rows = ref_rows->second.scale();
  spec.scale_cols = ref_cols->second.scale();
  for (const auto& [name, id] : graph.inputs()) {
    auto rt = traces.rows.find(name);
    auto ct = traces.cols.find(name);
    Size2 rf{1, 1};
    if (rt != traces.rows.end()) rf.rows = rt->second.end(e_rows - 1) + 1;
    if (ct != traces.cols.end()) rf.cols = ct->second.end(e_cols - 1) + 1;
    spec.receptive[name] = rf;
  }
  spec.validate();

  // Trailing ops can consume partial upsampled blocks (say, a stride-1 pool
  // after a transposed conv), so whole receptive windows would not produce
  // whole expression blocks. Streaming needs exact blocks; reject here.
  auto blocks_shape = [&](std::int64_t blocks) -> TensorShape {
    std::map<std::string, TensorShape> feed;
    for (const auto& [name, id] : graph.inputs()) {
      const Size2 rf = spec.receptive.at(name);
      std::int64_t step_rows = 0;
      std::int64_t step_cols = 0;
      auto rt = traces.rows.find(name);
      auto ct = traces.cols.find(name);
      if (rt != traces.rows.end()) step_rows = e_rows / rt->second.period * rt->second.grid;
      if (ct != traces.cols.end()) step_cols = e_cols / ct->second.period * ct->second.grid;
      feed[name] = TensorShape{1, rf.rows + (blocks - 1) * step_rows,
                               rf.cols + (blocks - 1) * step_cols,
                               graph.input_channels(name)};
    }
    const std::vector<TensorShape> shapes = infer_shapes(graph, feed);
    return shapes[static_cast<std::size_t>(graph.outputs().at(output))];
  };
  bool aligned = false;
  try {
    const TensorShape one = blocks_shape(1);
    const TensorShape two = blocks_shape(2);
    aligned = one.rows == e_rows && one.cols == e_cols && two.rows == 2 * e_rows &&
              two.cols == 2 * e_cols;
  } catch (const ShapeError&) {
  }
  if (!aligned) {
    throw SpecError("output '" + output +
                    "' does not produce whole expression blocks from whole receptive "
                    "windows; such a graph cannot stream block-exactly");
  }
  return spec;
}

FieldValidation validate_fields(const ModelGraph& graph, const std::string& output,
                                const FieldSpec& declared) {
  FieldValidation v;
  try {
    declared.validate();
  } catch (const Error& e) {
    v.messages.emplace_back(e.what());
    return v;
  }
  if (!graph.outputs().count(output)) {
    v.messages.push_back("model has no output named '" + output + "'");
    return v;
  }
  for (const auto& [name, id] : graph.inputs()) {
    if (!declared.receptive.count(name)) {
      v.messages.push_back("declared fields miss a receptive entry for input '" + name + "'");
      return v;
    }
  }
  for (const auto& [name, rf] : declared.receptive) {
    if (!graph.inputs().count(name)) {
      v.messages.push_back("declared receptive names unknown input '" + name + "'");
      return v;
    }
  }

  std::optional<OutputTraces> traces;
  try {
    traces = derive_traces(graph, output);
  } catch (const Error&) {
    traces.reset();
  }

  const std::int64_t e_rows = declared.expression.rows;
  const std::int64_t e_cols = declared.expression.cols;
  const std::int64_t d_rows = declared.row_field().step();
  const std::int64_t d_cols = declared.col_field().step();

  // Per-input block stride for the stepped run. Exact when traces exist and
  // the declared expression is a whole number of trace periods; the
  // reference stride covers the rest (same-grid inputs).
  auto step_for = [&](const std::string& name, bool row_axis) -> std::int64_t {
    const std::int64_t e = row_axis ? e_rows : e_cols;
    const std::int64_t d_ref = row_axis ? d_rows : d_cols;
    if (traces) {
      const auto& axis = row_axis ? traces->rows : traces->cols;
      auto it = axis.find(name);
      if (it == axis.end()) return 0;
      if (e % it->second.period == 0) return e / it->second.period * it->second.grid;
    }
    return d_ref;
  };

  auto run = [&](std::int64_t blocks) -> std::optional<TensorShape> {
    std::map<std::string, Tensor> feed;
    for (const auto& [name, id] : graph.inputs()) {
      const Size2 rf = declared.receptive.at(name);
      const TensorShape shape{1, rf.rows + (blocks - 1) * step_for(name, true),
                              rf.cols + (blocks - 1) * step_for(name, false),
                              graph.input_channels(name)};
      feed.emplace(name, Tensor(shape));
    }
    try {
      auto out = graph.forward(std::move(feed));
      return out.at(output).shape();
    } catch (const Error& e) {
      v.messages.emplace_back(e.what());
      return std::nullopt;
    }
  };

  if (auto s = run(1)) {
    v.shape_r_ok = s->rows == e_rows && s->cols == e_cols;
    if (!v.shape_r_ok) {
      v.messages.push_back("receptive-sized inputs produced a " + std::to_string(s->rows) + "x" +
                           std::to_string(s->cols) + " output, declared expression field is " +
                           to_string(declared.expression));
    }
  }
  if (auto s = run(2)) {
    v.shape_rd_ok = s->rows == 2 * e_rows && s->cols == 2 * e_cols;
    if (!v.shape_rd_ok) {
      v.messages.push_back("inputs one step larger produced a " + std::to_string(s->rows) + "x" +
                           std::to_string(s->cols) + " output, expected " +
                           std::to_string(2 * e_rows) + "x" + std::to_string(2 * e_cols));
    }
  }

  if (traces && traces->rows.count(declared.reference) && traces->cols.count(declared.reference)) {
    v.derived_available = true;
    v.derived = derive_fields(graph, declared.reference, output);
    bool ok = true;
    if (declared.scale_rows != v.derived->scale_rows ||
        declared.scale_cols != v.derived->scale_cols) {
      ok = false;
      v.messages.push_back("declared scale " + to_string(declared.scale_rows) + "/" +
                           to_string(declared.scale_cols) + " differs from derived " +
                           to_string(v.derived->scale_rows) + "/" +
                           to_string(v.derived->scale_cols));
    }
    if (e_rows % v.derived->expression.rows != 0 || e_cols % v.derived->expression.cols != 0) {
      ok = false;
      v.messages.push_back("declared expression " + to_string(declared.expression) +
                           " is not a multiple of the minimal block " +
                           to_string(v.derived->expression));
    }
    for (const auto& [name, rf] : declared.receptive) {
      Size2 want{1, 1};
      auto rt = traces->rows.find(name);
      auto ct = traces->cols.find(name);
      if (rt != traces->rows.end()) want.rows = rt->second.end(e_rows - 1) + 1;
      if (ct != traces->cols.end()) want.cols = ct->second.end(e_cols - 1) + 1;
      if (rf != want) {
        ok = false;
        v.messages.push_back("declared receptive " + to_string(rf) + " for input '" + name +
                             "' differs from derived " + to_string(want));
      }
    }
    v.derived_matches = ok;
  } else if (traces) {
    v.messages.push_back("output '" + output + "' does not depend on reference input '" +
                         declared.reference + "'");
  }
  return v;
}

std::int64_t peak_intermediate_bytes(const ModelGraph& graph,
                                     const std::map<std::string, TensorShape>& inputs) {
  const std::vector<TensorShape> shapes = infer_shapes(graph, inputs);
  const auto& nodes = graph.nodes();
  std::vector<int> pending(nodes.size(), 0);
  for (const auto& nd : nodes) {
    for (int in : nd.inputs) ++pending[static_cast<std::size_t>(in)];
  }
  for (const auto& [name, id] : graph.outputs()) ++pending[static_cast<std::size_t>(id)];

  std::int64_t current = 0;
  for (const auto& [name, id] : graph.inputs()) {
    current += shapes[static_cast<std::size_t>(id)].byte_count();
  }
  std::int64_t peak = current;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].op != OpKind::input) {
      current += shapes[i].byte_count();
      peak = std::max(peak, current);
    }
    for (int in : nodes[i].inputs) {
      if (--pending[static_cast<std::size_t>(in)] == 0) {
        current -= shapes[static_cast<std::size_t>(in)].byte_count();
      }
    }
    if (pending[i] == 0) current -= shapes[i].byte_count();
  }
  return peak;
}

}  // namespace rflow
