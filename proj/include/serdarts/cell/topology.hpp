// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace serdarts::cell {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  bool operator==(const Edge&) const = default;
};

/// Nodes 0 and 1 are the cell inputs; intermediate nodes are numbered
/// 2 .. N+1 and each has an edge from every earlier node. Edges are ordered
/// by destination, then source; that order indexes alpha table rows.
class CellTopology {
 public:
  explicit CellTopology(std::size_t intermediate_nodes = 4);

  static std::size_t edge_count(std::size_t intermediate_nodes) {
    return 2 * intermediate_nodes + intermediate_nodes * (intermediate_nodes - 1) / 2;
  }

  std::size_t intermediate_nodes() const { return nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Row of the edge from -> to; throws if no such edge.
  std::size_t edge_index(std::size_t from, std::size_t to) const;
  /// Row of the first edge into node `to`.
  static std::size_t first_edge_into(std::size_t to) { return edge_count(to - 2); }

 private:
  std::size_t nodes_;
  std::vector<Edge> edges_;
};

struct NetworkConfig {
  std::size_t cells = 4;
  std::size_t init_channels = 16;
  std::size_t nodes = 4;
  std::size_t stem_multiplier = 3;
  std::size_t input_channels = 1;

  /// Zero-based positions floor(C/3) and floor(2C/3), deduplicated.
  std::vector<std::size_t> reduction_indices() const;
  bool is_reduction(std::size_t cell) const;
  void validate() const;
};

/// Channel bookkeeping for one cell in the stack.
struct CellPlan {
  std::size_t prev_prev_channels;
  std::size_t prev_channels;
  std::size_t channels;  // width of every node inside the cell
  bool reduction;
  bool reduction_prev;
  std::size_t output_channels;
};

/// Widths double at each reduction; a cell's output width is
/// `concat_size` x its node width.
std::vector<CellPlan> channel_plan(const NetworkConfig& cfg, std::size_t concat_size);

}  // namespace serdarts::cell
