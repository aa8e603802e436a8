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

#include "mallight/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

#include "mallight/error.hpp"

namespace mallight {

RoadNetwork::RoadNetwork(std::vector<Intersection> nodes,
                         std::vector<RoadSegment> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  std::sort(nodes_.begin(), nodes_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id != static_cast<NodeId>(i))
      throw ValidationError("node ids must be unique and contiguous 0.." +
                            std::to_string(nodes_.size() - 1) + "; missing " +
                            std::to_string(i));
  if (nodes_.size() < 2)
    throw ValidationError("network is degenerate: fewer than 2 intersections");

  adjacency_.assign(nodes_.size(), {});
  std::map<std::pair<NodeId, NodeId>, double> lengths;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& s = edges_[e];
    const std::string tag = "edge " + std::to_string(s.from) + "->" +
                            std::to_string(s.to);
    if (!contains(s.from) || !contains(s.to))
      throw ValidationError(tag + " references a node that does not exist");
    if (s.from == s.to) throw ValidationError(tag + " is a self-loop");
    if (!(s.length > 0.0) || !std::isfinite(s.length))
      throw ValidationError(tag + " has non-positive length");
    if (s.lanes <= 0) throw ValidationError(tag + " has no lanes");
    if (!lengths.emplace(std::pair{s.from, s.to}, s.length).second)
      throw ValidationError(tag + " is duplicated");
    adjacency_[s.from].push_back({s.to, s.length, e});
  }
  for (const auto& [key, len] : lengths) {
    auto rev = lengths.find({key.second, key.first});
    if (rev == lengths.end())
      throw ValidationError("edge " + std::to_string(key.first) + "->" +
                            std::to_string(key.second) +
                            " has no reverse direction");
    if (std::abs(rev->second - len) > 1e-9 * std::max(1.0, len))
      throw ValidationError("edge " + std::to_string(key.first) + "<->" +
                            std::to_string(key.second) +
                            " directions differ in length");
  }
  for (auto& arcs : adjacency_)
    std::sort(arcs.begin(), arcs.end(),
              [](const Arc& a, const Arc& b) { return a.to < b.to; });

  const auto hops = hop_distances(*this, 0);
  for (std::size_t i = 0; i < hops.size(); ++i)
    if (hops[i] < 0)
      throw ValidationError("network is disconnected: node " +
                            std::to_string(i) + " unreachable from node 0");
}

std::optional<std::size_t> RoadNetwork::edge_index(NodeId from,
                                                   NodeId to) const {
  if (!contains(from)) return std::nullopt;
  for (const auto& arc : adjacency_[from])
    if (arc.to == to) return arc.edge;
  return std::nullopt;
}

RoadNetwork parse_network(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  long expect_nodes = -1;
  long expect_edges = -1;
  std::vector<Intersection> nodes;
  std::vector<RoadSegment> edges;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream fields(raw);
    fields.imbue(std::locale::classic());
    std::string kind;
    if (!(fields >> kind)) continue;
    if (kind == "nodes") {
      std::string word;
      if (expect_nodes >= 0) throw ParseError(source, line, "duplicate header");
      if (!(fields >> expect_nodes >> word >> expect_edges) || word != "edges" ||
          expect_nodes < 0 || expect_edges < 0)
        throw ParseError(source, line, "expected 'nodes N edges E'");
    } else if (kind == "node") {
      if (expect_nodes < 0) throw ParseError(source, line, "node before header");
      Intersection n;
      if (!(fields >> n.id >> n.x >> n.y))
        throw ParseError(source, line, "expected 'node <id> <x> <y>'");
      nodes.push_back(n);
    } else if (kind == "edge") {
      if (expect_nodes < 0) throw ParseError(source, line, "edge before header");
      RoadSegment s;
      if (!(fields >> s.from >> s.to >> s.length))
        throw ParseError(source, line, "expected 'edge <from> <to> <length_m>'");
      edges.push_back(s);
    } else {
      throw ParseError(source, line, "unknown record '" + kind + "'");
    }
    std::string extra;
    if (fields >> extra)
      throw ParseError(source, line, "trailing token '" + extra + "'");
  }
  if (expect_nodes < 0) throw ParseError(source, line, "missing header");
  if (static_cast<long>(nodes.size()) != expect_nodes)
    throw ParseError(source, line,
                     "header declares " + std::to_string(expect_nodes) +
                         " nodes, found " + std::to_string(nodes.size()));
  if (static_cast<long>(edges.size()) != expect_edges)
    throw ParseError(source, line,
                     "header declares " + std::to_string(expect_edges) +
                         " edges, found " + std::to_string(edges.size()));
  return RoadNetwork(std::move(nodes), std::move(edges));
}

RoadNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open network file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str(), path);
}

std::string format_network(const RoadNetwork& net) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "nodes " << net.size() << " edges " << net.edges().size() << "\n";
  char buf[128];
  for (const auto& n : net.nodes()) {
    std::snprintf(buf, sizeof buf, "node %d %.3f %.3f\n", n.id, n.x, n.y);
    out << buf;
  }
  for (const auto& e : net.edges()) {
    std::snprintf(buf, sizeof buf, "edge %d %d %.3f\n", e.from, e.to, e.length);
    out << buf;
  }
  return out.str();
}

void save_network(const RoadNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write network file '" + path + "'");
  out << format_network(net);
  if (!out) throw ArgumentError("write failed for '" + path + "'");
}

double default_sigma(const RoadNetwork& net) {
  const auto& edges = net.edges();
  double mean = 0.0;
  for (const auto& e : edges) mean += e.length;
  mean /= static_cast<double>(edges.size());
  double var = 0.0;
  for (const auto& e : edges) var += (e.length - mean) * (e.length - mean);
  const double sd = std::sqrt(var / static_cast<double>(edges.size()));
  return sd > 1e-9 * mean ? sd : mean;
}

WeightMatrix build_edge_weights(const RoadNetwork& net, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ArgumentError("sigma must be positive, got " + std::to_string(sigma));
  WeightMatrix w{Matrix(net.size(), net.size()), sigma};
  for (const auto& e : net.edges()) {
    const double d = e.length;
    w.values(e.from, e.to) = std::exp(-(d * d) / (sigma * sigma));
  }
  return w;
}

TransitionMatrix transition_matrix(const WeightMatrix& w) {
  const auto& m = w.values;
  TransitionMatrix t{Matrix(m.rows(), m.cols())};
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (double v : m.row(i)) sum += v;
    if (!(sum > 0.0))
      throw ValidationError("node " + std::to_string(i) +
                            " is isolated: zero out-degree weight");
    for (std::size_t j = 0; j < m.cols(); ++j) t.values(i, j) = m(i, j) / sum;
  }
  return t;
}

std::vector<NodeId> shortest_path(const RoadNetwork& net, NodeId origin,
                                  NodeId dest) {
  if (!net.contains(origin) || !net.contains(dest))
    throw ArgumentError("shortest_path: unknown node");
  if (origin == dest)
    throw ArgumentError("shortest_path: origin equals destination (" +
                        std::to_string(origin) + ")");

  // Distances to dest, run on the reverse graph (edges are paired, so the
  // forward adjacency serves as the reverse one).
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> to_dest(net.size(), kInf);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  to_dest[dest] = 0.0;
  frontier.push({0.0, dest});
  while (!frontier.empty()) {
    auto [d, u] = frontier.top();
    frontier.pop();
    if (d > to_dest[u]) continue;
    for (const auto& arc : net.out_arcs(u)) {
      const double nd = d + arc.length;
      if (nd < to_dest[arc.to]) {
        to_dest[arc.to] = nd;
        frontier.push({nd, arc.to});
      }
    }
  }
  if (to_dest[origin] == kInf)
    throw ValidationError("node " + std::to_string(dest) +
                          " unreachable from " + std::to_string(origin));

  // Walk the shortest-path DAG taking the smallest-id successor each time.
  std::vector<NodeId> route{origin};
  NodeId at = origin;
  while (at != dest) {
    const double tol = 1e-9 * std::max(1.0, to_dest[at]);
    NodeId next = -1;
    for (const auto& arc : net.out_arcs(at))
      if (std::abs(arc.length + to_dest[arc.to] - to_dest[at]) <= tol) {
        next = arc.to;
        break;
      }
    route.push_back(next);
    at = next;
  }
  return route;
}

double route_length(const RoadNetwork& net, const std::vector<NodeId>& route) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    const auto e = net.edge_index(route[i], route[i + 1]);
    if (!e) throw ArgumentError("route uses a missing edge");
    total += net.edges()[*e].length;
  }
  return total;
}

std::vector<int> hop_distances(const RoadNetwork& net, NodeId source) {
  std::vector<int> hops(net.size(), -1);
  std::queue<NodeId> q;
  hops.at(source) = 0;
  q.push(source);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (const auto& arc : net.out_arcs(u))
      if (hops[arc.to] < 0) {
        hops[arc.to] = hops[u] + 1;
        q.push(arc.to);
      }
  }
  return hops;
}

}  // namespace mallight
