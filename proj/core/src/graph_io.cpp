// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0

#include "traceobf/graph_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>

#include <fmt/format.h>

#include "text_util.hpp"

namespace traceobf {

namespace {

constexpr std::string_view kHeader = "traceobf-graph 1";

std::string join_ids(const std::vector<int>& ids) {
  if (ids.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

class GraphParser {
 public:
  GraphParser(std::string_view source, const std::vector<float>& blob)
      : source_(source), blob_(blob) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, line_, msg); }

  void set_line(int line) { line_ = line; }

  int to_int(std::string_view text) const {
    auto v = detail::parse_number<int>(text);
    if (!v) fail(fmt::format("expected integer, got '{}'", text));
    return *v;
  }

  Node parse_node(const std::vector<std::string_view>& tok) const {
    if (tok.size() < 3) fail("node record needs an id and a kind");
    Node n;
    n.id = to_int(tok[1]);
    auto kind = parse_op_kind(tok[2]);
    if (!kind) fail(fmt::format("unknown operator '{}'", tok[2]));
    n.kind = *kind;
    for (std::size_t i = 3; i < tok.size(); ++i) {
      const std::string_view t = tok[i];
      if (t == "const") {
        n.attrs.constant = true;
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string_view::npos) fail(fmt::format("malformed attribute '{}'", t));
      const std::string_view key = t.substr(0, eq);
      const std::string_view val = t.substr(eq + 1);
      if (key == "inputs") {
        if (val != "-") {
          for (auto part : detail::split(val, ',')) n.inputs.push_back(to_int(part));
        }
      } else if (key == "k1") {
        n.attrs.k1 = to_int(val);
      } else if (key == "k2") {
        n.attrs.k2 = to_int(val);
      } else if (key == "c") {
        n.attrs.in_channels = to_int(val);
      } else if (key == "j") {
        n.attrs.out_channels = to_int(val);
      } else if (key == "stride") {
        n.attrs.stride = to_int(val);
      } else if (key == "pad") {
        n.attrs.padding = to_int(val);
      } else if (key == "groups") {
        n.attrs.groups = to_int(val);
      } else if (key == "window") {
        n.attrs.window = to_int(val);
      } else if (key == "begin") {
        n.attrs.begin = to_int(val);
      } else if (key == "end") {
        n.attrs.end = to_int(val);
      } else if (key == "eps") {
        auto v = detail::parse_number<float>(val);
        if (!v) fail(fmt::format("bad eps '{}'", val));
        n.attrs.eps = *v;
      } else if (key == "weights") {
        auto parts = detail::split(val, ':');
        if (parts.size() != 2) fail("weights must be offset:count");
        const auto offset = detail::parse_number<std::size_t>(parts[0]);
        const auto count = detail::parse_number<std::size_t>(parts[1]);
        if (!offset || !count) fail("weights must be offset:count");
        if (*offset + *count > blob_.size()) fail("weight reference outside sidecar");
        n.weights = make_weights(std::vector<float>(blob_.begin() + *offset,
                                                    blob_.begin() + *offset + *count));
      } else {
        fail(fmt::format("unknown attribute '{}'", key));
      }
    }
    return n;
  }

 private:
  std::string_view source_;
  const std::vector<float>& blob_;
  int line_ = 0;
};

}  // namespace

std::string encode_weight_blob(const std::vector<float>& values) {
  std::string out(kWeightMagic);
  out.reserve(kWeightMagic.size() + values.size() * 4);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  return out;
}

std::vector<float> decode_weight_blob(std::string_view bytes) {
  if (bytes.size() < kWeightMagic.size() || bytes.substr(0, kWeightMagic.size()) != kWeightMagic) {
    throw Error(ErrorCode::kParse, "weight sidecar lacks OBFW0001 magic");
  }
  const std::string_view body = bytes.substr(kWeightMagic.size());
  if (body.size() % 4 != 0) throw Error(ErrorCode::kParse, "weight sidecar is truncated");
  std::vector<float> out(body.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[4 * i + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

GraphDocument encode_graph(const Graph& graph, std::string_view sidecar_name) {
  std::string text;
  std::vector<float> blob;
  const TensorShape& in = graph.input_shape();
  text += kHeader;
  text += '\n';
  text += fmt::format("input {} {} {} {}\n", in.batch, in.channels, in.height, in.width);
  text += fmt::format("output {}\n", graph.output_id());
  if (!sidecar_name.empty()) text += fmt::format("weights {}\n", sidecar_name);
  for (const auto& [id, n] : graph.nodes()) {
    const Attrs& a = n.attrs;
    std::string line =
        fmt::format("node {} {} inputs={}", id, op_kind_name(n.kind), join_ids(n.inputs));
    switch (n.kind) {
      case OpKind::kConv2D:
        line += fmt::format(" k1={} k2={} c={} j={} stride={} pad={} groups={}", a.k1, a.k2,
                            a.in_channels, a.out_channels, a.stride, a.padding, a.groups);
        break;
      case OpKind::kLinear:
        line += fmt::format(" c={} j={}", a.in_channels, a.out_channels);
        break;
      case OpKind::kMaxPool:
        line += fmt::format(" window={} stride={}", a.window, a.stride);
        break;
      case OpKind::kSlice:
        line += fmt::format(" begin={} end={}", a.begin, a.end);
        break;
      case OpKind::kBatchNorm:
        line += " eps=" + detail::format_real(a.eps);
        break;
      case OpKind::kAdd:
        if (a.constant) line += " const";
        break;
      default:
        break;
    }
    if (n.has_weights()) {
      line += fmt::format(" weights={}:{}", blob.size(), n.weights->size());
      blob.insert(blob.end(), n.weights->begin(), n.weights->end());
    }
    text += line;
    text += '\n';
  }
  return {std::move(text), encode_weight_blob(blob)};
}

Graph decode_graph(std::string_view text, std::string_view weight_bytes, std::string_view source) {
  const std::vector<float> blob =
      weight_bytes.empty() ? std::vector<float>{} : decode_weight_blob(weight_bytes);
  GraphParser parser(source, blob);
  const auto all = detail::lines(text);
  if (all.empty() || detail::tokens(all[0]).empty() || all[0].substr(0, kHeader.size()) != kHeader) {
    throw ParseError(source, 1, "missing 'traceobf-graph 1' header");
  }
  Graph graph;
  bool have_input = false;
  bool have_output = false;
  int output = -1;
  std::vector<Node> nodes;
  for (std::size_t i = 1; i < all.size(); ++i) {
    parser.set_line(static_cast<int>(i) + 1);
    const auto tok = detail::tokens(all[i]);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok[0] == "input") {
      if (tok.size() != 5) parser.fail("input needs 4 dimensions");
      TensorShape s{parser.to_int(tok[1]), parser.to_int(tok[2]), parser.to_int(tok[3]),
                    parser.to_int(tok[4])};
      graph = Graph(s);
      have_input = true;
    } else if (tok[0] == "output") {
      if (tok.size() != 2) parser.fail("output needs a node id");
      output = parser.to_int(tok[1]);
      have_output = true;
    } else if (tok[0] == "weights") {
      if (tok.size() != 2) parser.fail("weights needs a sidecar name");
    } else if (tok[0] == "node") {
      nodes.push_back(parser.parse_node(tok));
    } else {
      parser.fail(fmt::format("unknown record '{}'", tok[0]));
    }
  }
  parser.set_line(static_cast<int>(all.size()));
  if (!have_input) parser.fail("missing input record");
  if (!have_output) parser.fail("missing output record");
  for (Node& n : nodes) {
    try {
      graph.add(std::move(n));
    } catch (const Error& e) {
      parser.fail(e.what());
    }
  }
  graph.set_output(output);
  return graph;
}

void save_graph(const Graph& graph, const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".obfw");
  const GraphDocument doc = encode_graph(graph, sidecar.filename().string());
  detail::write_file(path, doc.text);
  detail::write_file(sidecar, doc.weight_bytes);
}

Graph load_graph(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::string sidecar_name;
  for (auto line : detail::lines(text)) {
    auto tok = detail::tokens(line);
    if (tok.size() == 2 && tok[0] == "weights") {
      sidecar_name = std::string(tok[1]);
      break;
    }
  }
  std::string bytes;
  if (!sidecar_name.empty()) {
    const auto sidecar = path.parent_path() / sidecar_name;
    if (std::filesystem::exists(sidecar)) bytes = detail::read_file(sidecar);
  }
  return decode_graph(text, bytes, path.string());
}

}  // namespace traceobf
