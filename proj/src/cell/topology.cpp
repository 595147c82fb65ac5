// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cell/topology.hpp"

#include <algorithm>
#include <string>

#include "serdarts/tensor.hpp"

namespace serdarts::cell {

CellTopology::CellTopology(std::size_t intermediate_nodes) : nodes_(intermediate_nodes) {
  if (intermediate_nodes == 0) throw Error("a cell needs at least one intermediate node");
  for (std::size_t to = 2; to < intermediate_nodes + 2; ++to)
    for (std::size_t from = 0; from < to; ++from) edges_.push_back({from, to});
}

std::size_t CellTopology::edge_index(std::size_t from, std::size_t to) const {
  if (to < 2 || to >= nodes_ + 2 || from >= to) {
    throw Error("no edge " + std::to_string(from) + " -> " + std::to_string(to) + " in a " +
                std::to_string(nodes_) + "-node cell");
  }
  return first_edge_into(to) + from;
}

std::vector<std::size_t> NetworkConfig::reduction_indices() const {
  std::vector<std::size_t> out{cells / 3, 2 * cells / 3};
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool NetworkConfig::is_reduction(std::size_t cell) const {
  return cell == cells / 3 || cell == 2 * cells / 3;
}

void NetworkConfig::validate() const {
  if (cells == 0) throw Error("network needs at least one cell");
  if (init_channels == 0) throw Error("init_channels must be positive");
  if (nodes == 0) throw Error("cells need at least one intermediate node");
  if (stem_multiplier == 0) throw Error("stem_multiplier must be positive");
  if (input_channels == 0) throw Error("input_channels must be positive");
}

std::vector<CellPlan> channel_plan(const NetworkConfig& cfg, std::size_t concat_size) {
  cfg.validate();
  std::vector<CellPlan> plan;
  const std::size_t stem = cfg.stem_multiplier * cfg.init_channels;
  std::size_t prev_prev = stem, prev = stem, width = cfg.init_channels;
  bool reduction_prev = false;
  for (std::size_t i = 0; i < cfg.cells; ++i) {
    const bool reduction = cfg.is_reduction(i);
    if (reduction) width *= 2;
    const std::size_t out = concat_size * width;
    plan.push_back({prev_prev, prev, width, reduction, reduction_prev, out});
    reduction_prev = reduction;
    prev_prev = prev;
    prev = out;
  }
  return plan;
}

}  // namespace serdarts::cell
