// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "serdarts/cell/genotype.hpp"
#include "serdarts/cell/topology.hpp"
#include "serdarts/nn/layers.hpp"
#include "serdarts/search/mixed_op.hpp"

namespace serdarts::cell {

/// A cell maps its two predecessors' outputs to a new feature map.
template <typename T>
class Cell : public nn::Layer<T> {
 public:
  Cell(const CellPlan& plan, RngState& rng);

  virtual Tensor<T> forward_cell(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx) = 0;
  /// Single-input form: the input feeds both predecessor slots.
  Tensor<T> forward(const Tensor<T>& x, nn::ForwardContext& ctx) override { return forward_cell(x, x, ctx); }
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;

  const CellPlan& plan() const { return plan_; }
  bool reduction() const { return plan_.reduction; }

  /// Both inputs adapted to the cell width; the older one is spatially
  /// reduced when the previous cell was a reduction.
  std::pair<Tensor<T>, Tensor<T>> preprocess(const Tensor<T>& prev_prev, const Tensor<T>& prev,
                                             nn::ForwardContext& ctx);

 protected:
  std::size_t edge_stride(std::size_t from) const { return plan_.reduction && from < 2 ? 2 : 1; }

  CellPlan plan_;
  std::unique_ptr<nn::Layer<T>> preprocess0_;
  std::unique_ptr<nn::Layer<T>> preprocess1_;
};

/// Continuous cell: one mixed op per edge, mixed by the shared alpha table
/// of the cell's kind.
template <typename T>
class SearchCell : public Cell<T> {
 public:
  SearchCell(const CellTopology& topology, const CellPlan& plan, search::AlphaTable<T> alpha, RngState& rng);

  Tensor<T> forward_cell(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;

  /// x_j = sum over edges (i -> j) of mixed_op(x_i). `states` holds the node
  /// outputs computed so far (at least nodes 0 .. j-1); `weights` is the
  /// softmaxed alpha table.
  Tensor<T> node_output(std::size_t j, const std::vector<Tensor<T>>& states, const Tensor<T>& weights,
                        nn::ForwardContext& ctx);

  /// All node outputs, preprocessed inputs first.
  std::vector<Tensor<T>> node_states(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx);

  search::MixedOp<T>& edge_op(std::size_t edge) { return *ops_.at(edge); }
  const CellTopology& topology() const { return topology_; }
  const search::AlphaTable<T>& alpha() const { return alpha_; }

 private:
  CellTopology topology_;
  search::AlphaTable<T> alpha_;
  std::vector<std::unique_ptr<search::MixedOp<T>>> ops_;
};

/// Discrete cell: one concrete op per retained genotype edge.
template <typename T>
class DiscreteCell : public Cell<T> {
 public:
  DiscreteCell(const Genotype& genotype, const CellPlan& plan, RngState& rng);

  Tensor<T> forward_cell(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;

 private:
  std::size_t nodes_;
  std::vector<GenotypeEdge> edges_;
  std::vector<std::size_t> concat_;
  std::vector<std::unique_ptr<nn::Layer<T>>> ops_;
};

/// Stem, then a stack of cells where cell t reads the outputs of t-1 and
/// t-2. The stem output fills both initial predecessor slots.
template <typename T>
class CellNetwork : public nn::Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, nn::ForwardContext& ctx) override;
  void visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) override;

  Tensor<T> stem(const Tensor<T>& x, nn::ForwardContext& ctx);
  /// Output of cell t given its two predecessors.
  Tensor<T> forward_cell(std::size_t t, const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx);
  /// [stem, stem, y_0, ..., y_{C-1}].
  std::vector<Tensor<T>> states(const Tensor<T>& x, nn::ForwardContext& ctx);

  const NetworkConfig& config() const { return cfg_; }
  std::size_t num_cells() const { return cells_.size(); }
  Cell<T>& cell(std::size_t t) { return *cells_.at(t); }
  std::size_t output_channels() const { return cells_.back()->plan().output_channels; }

 protected:
  CellNetwork(const NetworkConfig& cfg, RngState& rng);

  NetworkConfig cfg_;
  nn::Conv2d<T> stem_conv_;
  nn::BatchNorm2d<T> stem_bn_;
  std::vector<std::unique_ptr<Cell<T>>> cells_;
};

template <typename T>
class SearchNetwork : public CellNetwork<T> {
 public:
  SearchNetwork(const NetworkConfig& cfg, RngState& rng, double alpha_scale = 1e-3);

  search::AlphaTable<T>& alpha_normal() { return alpha_normal_; }
  search::AlphaTable<T>& alpha_reduce() { return alpha_reduce_; }
  /// Architecture parameters (normal, reduce). Not reported by visit().
  std::vector<Tensor<T>> alphas() { return {alpha_normal_.logits, alpha_reduce_.logits}; }
  Genotype genotype() const;
  SearchCell<T>& search_cell(std::size_t t) { return static_cast<SearchCell<T>&>(this->cell(t)); }

 private:
  search::AlphaTable<T> alpha_normal_;
  search::AlphaTable<T> alpha_reduce_;
};

template <typename T>
class DiscreteNetwork : public CellNetwork<T> {
 public:
  DiscreteNetwork(const NetworkConfig& cfg, const Genotype& genotype, RngState& rng);
  const Genotype& genotype() const { return genotype_; }

 private:
  Genotype genotype_;
};

}  // namespace serdarts::cell
