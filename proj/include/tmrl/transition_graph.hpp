#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "tmrl/discretizer.hpp"

namespace tmrl {

// Node key: box index, or kFailureNode for the aggregated failure sink.
inline constexpr int kFailureNode = -1;

inline int node_key(NextState s) { return s ? static_cast<int>(s->value()) : kFailureNode; }

// Cumulative state-transition multigraph of a training run.
class TransitionGraph {
 public:
  void record_transition(DiscreteStateId from, NextState to) {
    const int a = node_key(from);
    const int b = node_key(to);
    nodes_.insert(a);
    nodes_.insert(b);
    ++edges_[{a, b}];
    ++total_;
  }

  // Used when rebuilding a graph from an exported document.
  void add_edge(int from, int to, std::uint64_t count) {
    if (count == 0) return;
    nodes_.insert(from);
    nodes_.insert(to);
    edges_[{from, to}] += count;
    total_ += count;
  }

  std::size_t unique_state_count() const { return nodes_.size() - (nodes_.contains(kFailureNode) ? 1 : 0); }

  std::uint64_t edge_count(int from, int to) const {
    auto it = edges_.find({from, to});
    return it == edges_.end() ? 0 : it->second;
  }

  std::uint64_t total_transitions() const { return total_; }
  const std::set<int>& nodes() const { return nodes_; }
  const std::map<std::pair<int, int>, std::uint64_t>& edges() const { return edges_; }
  bool empty() const { return nodes_.empty(); }

  friend bool operator==(const TransitionGraph&, const TransitionGraph&) = default;

 private:
  std::set<int> nodes_;
  std::map<std::pair<int, int>, std::uint64_t> edges_;
  std::uint64_t total_ = 0;
};

enum class GraphFormat { Dot, Json };

namespace detail {
inline std::string dot_node(int key) { return key == kFailureNode ? "failure" : "s" + std::to_string(key); }
}  // namespace detail

inline void write_dot(const TransitionGraph& g, std::ostream& os) {
  os << "digraph transitions {\n";
  for (int n : g.nodes()) {
    os << "  " << detail::dot_node(n) << " [label=\"" << (n == kFailureNode ? std::string("F") : std::to_string(n))
       << "\"" << (n == kFailureNode ? ", shape=box" : "") << "];\n";
  }
  for (const auto& [key, count] : g.edges()) {
    os << "  " << detail::dot_node(key.first) << " -> " << detail::dot_node(key.second) << " [weight=" << count
       << "];\n";
  }
  os << "}\n";
}

// nodes: sorted ids (failure sink is "F"); edges sorted by (from, to).
inline nlohmann::ordered_json to_json(const TransitionGraph& g) {
  auto id = [](int k) { return k == kFailureNode ? nlohmann::ordered_json("F") : nlohmann::ordered_json(k); };
  nlohmann::ordered_json doc;
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& [key, count] : g.edges()) {
    nlohmann::ordered_json e;
    e["count"] = count;
    e["from"] = id(key.first);
    e["to"] = id(key.second);
    doc["edges"].push_back(std::move(e));
  }
  doc["nodes"] = nlohmann::ordered_json::array();
  for (int n : g.nodes()) doc["nodes"].push_back(id(n));
  return doc;
}

inline TransitionGraph graph_from_json(const nlohmann::json& doc) {
  auto key = [](const nlohmann::json& v) { return v.is_string() ? kFailureNode : v.get<int>(); };
  TransitionGraph g;
  for (const auto& e : doc.at("edges")) g.add_edge(key(e.at("from")), key(e.at("to")), e.at("count").get<std::uint64_t>());
  return g;
}

inline void export_graph(const TransitionGraph& g, GraphFormat format, std::ostream& os) {
  if (format == GraphFormat::Dot) {
    write_dot(g, os);
  } else {
    os << to_json(g).dump() << '\n';
  }
  if (!os) throw Error("export_graph: sink is not writable");
}

inline std::string export_graph(const TransitionGraph& g, GraphFormat format) {
  std::ostringstream os;
  export_graph(g, format, os);
  return os.str();
}

}  // namespace tmrl
