// Copyright 2026 The MalLight Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mallight/matrix.hpp"

namespace mallight {

using NodeId = int;

struct Intersection {
  NodeId id = 0;
  double x = 0.0;  // meters
  double y = 0.0;  // meters
};

struct RoadSegment {
  NodeId from = 0;
  NodeId to = 0;
  double length = 0.0;  // meters
  int lanes = 3;        // per direction: left, through, right
};

/// Immutable validated road graph. Construction enforces: contiguous ids
/// 0..N-1, no dangling or self-loop edges, paired directions of equal length,
/// and connectivity.
class RoadNetwork {
 public:
  struct Arc {
    NodeId to;
    double length;
    std::size_t edge;
  };

  RoadNetwork(std::vector<Intersection> nodes, std::vector<RoadSegment> edges);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Intersection>& nodes() const noexcept { return nodes_; }
  const std::vector<RoadSegment>& edges() const noexcept { return edges_; }
  const Intersection& node(NodeId id) const { return nodes_.at(id); }
  // Outgoing arcs sorted by destination id.
  const std::vector<Arc>& out_arcs(NodeId id) const { return adjacency_.at(id); }
  std::optional<std::size_t> edge_index(NodeId from, NodeId to) const;
  bool contains(NodeId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < nodes_.size();
  }

 private:
  std::vector<Intersection> nodes_;
  std::vector<RoadSegment> edges_;
  std::vector<std::vector<Arc>> adjacency_;
};

/// Edge weights from a thresholded Gaussian kernel over road length.
struct WeightMatrix {
  Matrix values;
  double sigma = 0.0;
};

/// Row-normalized weights: a random-walk transition matrix on the road graph.
struct TransitionMatrix {
  Matrix values;
};

RoadNetwork parse_network(const std::string& text,
                          const std::string& source = "<string>");
RoadNetwork load_network(const std::string& path);
std::string format_network(const RoadNetwork& net);
void save_network(const RoadNetwork& net, const std::string& path);

// Standard deviation of the direct road lengths, or their mean when that
// deviation is zero (uniform grids).
double default_sigma(const RoadNetwork& net);

WeightMatrix build_edge_weights(const RoadNetwork& net, double sigma);
TransitionMatrix transition_matrix(const WeightMatrix& w);

/// Minimum-length route from origin to dest (inclusive). Among equal-length
/// routes the lexicographically smallest node sequence wins.
std::vector<NodeId> shortest_path(const RoadNetwork& net, NodeId origin,
                                  NodeId dest);
double route_length(const RoadNetwork& net, const std::vector<NodeId>& route);

// Unweighted hop counts from source to every node.
std::vector<int> hop_distances(const RoadNetwork& net, NodeId source);

}  // namespace mallight
