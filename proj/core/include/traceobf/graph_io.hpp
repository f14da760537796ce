// Copyright 2026 The traceobf Authors
// SPDX-License-Identifier: Apache-2.0
//
// Graph text format (one node record per line) plus a little-endian float32
// weight sidecar that starts with the 8-byte magic "OBFW0001".

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "traceobf/graph.hpp"

namespace traceobf {

inline constexpr std::string_view kWeightMagic = "OBFW0001";

struct GraphDocument {
  std::string text;
  std::string weight_bytes;  // sidecar contents, magic included
};

GraphDocument encode_graph(const Graph& graph, std::string_view sidecar_name);
// `source` names the document in parse errors.
Graph decode_graph(std::string_view text, std::string_view weight_bytes,
                   std::string_view source = "<graph>");

std::string encode_weight_blob(const std::vector<float>& values);
std::vector<float> decode_weight_blob(std::string_view bytes);

// Writes `path` and a sidecar next to it (same stem, ".obfw").
void save_graph(const Graph& graph, const std::filesystem::path& path);
Graph load_graph(const std::filesystem::path& path);

}  // namespace traceobf
