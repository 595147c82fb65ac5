// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cell/genotype.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "serdarts/cell/topology.hpp"

namespace serdarts::cell {

using search::OpKind;
using nlohmann::json;

namespace {

void validate_edges(const std::vector<GenotypeEdge>& edges, std::size_t nodes, const char* kind) {
  std::vector<std::size_t> incoming(nodes + 2, 0);
  for (const auto& e : edges) {
    const std::string where = std::string(kind) + " edge " + std::to_string(e.from) + " -> " + std::to_string(e.to);
    if (e.from >= e.to) throw Error(where + ": source must precede destination");
    if (e.to < 2 || e.to >= nodes + 2) throw Error(where + ": destination is not an intermediate node");
    if (e.op == OpKind::none) throw Error(where + ": 'none' cannot be a retained operation");
    ++incoming[e.to];
  }
  for (std::size_t to = 2; to < nodes + 2; ++to) {
    if (incoming[to] != 2) {
      throw Error(std::string(kind) + " node " + std::to_string(to) + " has " + std::to_string(incoming[to]) +
                  " incoming edges, expected 2");
    }
    std::vector<std::size_t> sources;
    for (const auto& e : edges)
      if (e.to == to) sources.push_back(e.from);
    if (sources[0] == sources[1]) {
      throw Error(std::string(kind) + " node " + std::to_string(to) + " has a duplicated source " +
                  std::to_string(sources[0]));
    }
  }
}

template <typename T>
std::vector<GenotypeEdge> derive_kind(const Tensor<T>& logits, std::size_t nodes, const char* kind) {
  const CellTopology topo(nodes);
  if (logits.rank() != 2 || logits.dim(0) != topo.num_edges() || logits.dim(1) != search::kNumOps) {
    throw ShapeError(std::string(kind) + " alpha table has shape " + shape_str(logits.shape()) + ", expected [" +
                     std::to_string(topo.num_edges()) + " x 8]");
  }
  auto v = logits.data();
  struct Choice {
    std::size_t op;
    std::size_t from;
    double weight;
  };
  std::vector<GenotypeEdge> out;
  for (std::size_t to = 2; to < nodes + 2; ++to) {
    std::vector<Choice> choices;
    for (std::size_t from = 0; from < to; ++from) {
      const std::size_t row = topo.edge_index(from, to);
      double peak = -INFINITY;
      for (std::size_t k = 0; k < search::kNumOps; ++k) peak = std::max(peak, double(v[row * search::kNumOps + k]));
      // Summed in sorted order so rows holding the same values share a denominator bit for bit.
      std::array<double, search::kNumOps> terms{};
      for (std::size_t k = 0; k < search::kNumOps; ++k) terms[k] = std::exp(double(v[row * search::kNumOps + k]) - peak);
      std::sort(terms.begin(), terms.end());
      double z = 0.0;
      for (double t : terms) z += t;
      // Softmax is monotone, so the argmax over logits is the argmax over weights.
      std::size_t best = 0;
      for (std::size_t k = 1; k < search::kNumOps; ++k) {
        if (search::kAllOps[k] == OpKind::none) continue;
        if (v[row * search::kNumOps + k] > v[row * search::kNumOps + best]) best = k;
      }
      const double weight = std::exp(double(v[row * search::kNumOps + best]) - peak) / z;
      choices.push_back({best, from, weight});
    }
    std::stable_sort(choices.begin(), choices.end(), [](const Choice& a, const Choice& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      if (a.op != b.op) return a.op < b.op;
      return a.from < b.from;
    });
    choices.resize(std::min<std::size_t>(2, choices.size()));
    std::sort(choices.begin(), choices.end(), [](const Choice& a, const Choice& b) { return a.from < b.from; });
    for (const auto& c : choices) out.push_back({search::kAllOps[c.op], c.from, to});
  }
  return out;
}

json edges_to_json(const std::vector<GenotypeEdge>& edges) {
  json arr = json::array();
  for (const auto& e : edges) arr.push_back(json::array({std::string(search::op_name(e.op)), e.from, e.to}));
  return arr;
}

std::vector<GenotypeEdge> edges_from_json(const json& arr, const char* kind) {
  if (!arr.is_array()) throw Error(std::string("genotype field '") + kind + "' must be an array");
  std::vector<GenotypeEdge> out;
  for (const auto& item : arr) {
    if (!item.is_array() || item.size() != 3 || !item[0].is_string() || !item[1].is_number_unsigned() ||
        !item[2].is_number_unsigned()) {
      throw Error(std::string("genotype ") + kind + " edge must be [op, from, to], got " + item.dump());
    }
    out.push_back({search::parse_op(item[0].get<std::string>()), item[1].get<std::size_t>(),
                   item[2].get<std::size_t>()});
  }
  return out;
}

}  // namespace

void Genotype::validate() const {
  if (nodes == 0) throw Error("genotype needs at least one intermediate node");
  validate_edges(normal, nodes, "normal");
  validate_edges(reduce, nodes, "reduce");
  if (concat.empty()) throw Error("genotype concat list is empty");
  for (std::size_t i = 0; i < concat.size(); ++i) {
    if (concat[i] < 2 || concat[i] >= nodes + 2) {
      throw Error("genotype concat entry " + std::to_string(concat[i]) + " is not an intermediate node");
    }
    if (i > 0 && concat[i] <= concat[i - 1]) throw Error("genotype concat entries must be strictly increasing");
  }
}

template <typename T>
Genotype derive_genotype(const Tensor<T>& normal_logits, const Tensor<T>& reduce_logits, std::size_t nodes) {
  Genotype g;
  g.nodes = nodes;
  g.normal = derive_kind(normal_logits, nodes, "normal");
  g.reduce = derive_kind(reduce_logits, nodes, "reduce");
  for (std::size_t n = 2; n < nodes + 2; ++n) g.concat.push_back(n);
  return g;
}

std::string export_genotype(const Genotype& g) {
  g.validate();
  json doc;  // object keys serialize in sorted order
  doc["nodes"] = g.nodes;
  doc["normal"] = edges_to_json(g.normal);
  doc["reduce"] = edges_to_json(g.reduce);
  doc["concat"] = g.concat;
  return doc.dump(2) + "\n";
}

Genotype import_genotype(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed genotype JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error("genotype JSON must be an object");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (key != "nodes" && key != "normal" && key != "reduce" && key != "concat") {
      throw Error("unknown genotype field '" + key + "'");
    }
  }
  for (const char* key : {"nodes", "normal", "reduce", "concat"}) {
    if (!doc.contains(key)) throw Error(std::string("genotype JSON lacks '") + key + "'");
  }
  if (!doc["nodes"].is_number_unsigned()) throw Error("genotype 'nodes' must be a non-negative integer");
  Genotype g;
  g.nodes = doc["nodes"].get<std::size_t>();
  g.normal = edges_from_json(doc["normal"], "normal");
  g.reduce = edges_from_json(doc["reduce"], "reduce");
  if (!doc["concat"].is_array()) throw Error("genotype 'concat' must be an array");
  for (const auto& c : doc["concat"]) {
    if (!c.is_number_unsigned()) throw Error("genotype concat entries must be non-negative integers");
    g.concat.push_back(c.get<std::size_t>());
  }
  g.validate();
  return g;
}

std::string export_dot(const Genotype& g) {
  g.validate();
  auto label = [](std::size_t node) { return node < 2 ? std::to_string(node) : "n" + std::to_string(node); };
  std::ostringstream out;
  for (const auto& [name, edges] : {std::pair{"normal", &g.normal}, std::pair{"reduce", &g.reduce}}) {
    out << "digraph " << name << " {\n  rankdir=LR;\n";
    for (std::size_t n = 0; n < g.nodes + 2; ++n) out << "  \"" << label(n) << "\";\n";
    for (const auto& e : *edges) {
      out << "  \"" << label(e.from) << "\" -> \"" << label(e.to) << "\" [label=\"" << search::op_name(e.op)
          << "\"];\n";
    }
    out << "}\n";
  }
  return out.str();
}

template Genotype derive_genotype(const Tensor<float>&, const Tensor<float>&, std::size_t);
template Genotype derive_genotype(const Tensor<double>&, const Tensor<double>&, std::size_t);

}  // namespace serdarts::cell
