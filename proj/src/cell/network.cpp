// SPDX-License-Identifier: Apache-2.0
#include "serdarts/cell/network.hpp"

#include "serdarts/ops.hpp"

namespace serdarts::cell {

namespace {

template <typename T>
std::unique_ptr<nn::Layer<T>> make_preprocess0(const CellPlan& plan, RngState& rng) {
  if (plan.reduction_prev) return std::make_unique<nn::FactorizedReduce<T>>(plan.prev_prev_channels, plan.channels, rng);
  return nn::relu_conv_bn<T>(plan.prev_prev_channels, plan.channels, 1, 1, 0, rng);
}

}  // namespace

// ------------------------------------------------------------------ Cell

template <typename T>
Cell<T>::Cell(const CellPlan& plan, RngState& rng)
    : plan_(plan),
      preprocess0_(make_preprocess0<T>(plan, rng)),
      preprocess1_(nn::relu_conv_bn<T>(plan.prev_channels, plan.channels, 1, 1, 0, rng)) {}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Cell<T>::preprocess(const Tensor<T>& prev_prev, const Tensor<T>& prev,
                                                    nn::ForwardContext& ctx) {
  if (prev_prev.rank() != 4 || prev.rank() != 4 || prev_prev.dim(1) != plan_.prev_prev_channels ||
      prev.dim(1) != plan_.prev_channels) {
    throw ShapeError("cell expects inputs with " + std::to_string(plan_.prev_prev_channels) + " and " +
                     std::to_string(plan_.prev_channels) + " channels, got " + shape_str(prev_prev.shape()) +
                     " and " + shape_str(prev.shape()));
  }
  Tensor<T> s0 = preprocess0_->forward(prev_prev, ctx);
  Tensor<T> s1 = preprocess1_->forward(prev, ctx);
  if (s0.shape() != s1.shape()) {
    throw ShapeError("cell inputs disagree after preprocessing: " + shape_str(s0.shape()) + " vs " +
                     shape_str(s1.shape()));
  }
  return {s0, s1};
}

template <typename T>
void Cell<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  preprocess0_->visit(nn::join_name(prefix, "preprocess0"), fn);
  preprocess1_->visit(nn::join_name(prefix, "preprocess1"), fn);
}

// ------------------------------------------------------------ SearchCell

template <typename T>
SearchCell<T>::SearchCell(const CellTopology& topology, const CellPlan& plan, search::AlphaTable<T> alpha,
                          RngState& rng)
    : Cell<T>(plan, rng), topology_(topology), alpha_(std::move(alpha)) {
  if (alpha_.edges() != topology_.num_edges()) {
    throw ShapeError("alpha table has " + std::to_string(alpha_.edges()) + " rows for a cell with " +
                     std::to_string(topology_.num_edges()) + " edges");
  }
  for (const auto& e : topology_.edges())
    ops_.push_back(std::make_unique<search::MixedOp<T>>(plan.channels, this->edge_stride(e.from), rng));
}

template <typename T>
Tensor<T> SearchCell<T>::node_output(std::size_t j, const std::vector<Tensor<T>>& states, const Tensor<T>& weights,
                                     nn::ForwardContext& ctx) {
  const std::size_t to = j + 2;
  if (to >= topology_.intermediate_nodes() + 2 || states.size() < to) {
    throw Error("node_output: node " + std::to_string(to) + " needs " + std::to_string(to) + " predecessor states");
  }
  std::vector<Tensor<T>> terms;
  for (std::size_t from = 0; from < to; ++from) {
    const std::size_t e = topology_.edge_index(from, to);
    terms.push_back(ops_[e]->forward(states[from], weights, e, ctx));
  }
  return sum_n(terms);
}

template <typename T>
std::vector<Tensor<T>> SearchCell<T>::node_states(const Tensor<T>& prev_prev, const Tensor<T>& prev,
                                                  nn::ForwardContext& ctx) {
  auto [s0, s1] = this->preprocess(prev_prev, prev, ctx);
  const Tensor<T> weights = alpha_.weights();
  std::vector<Tensor<T>> states{s0, s1};
  for (std::size_t j = 0; j < topology_.intermediate_nodes(); ++j) states.push_back(node_output(j, states, weights, ctx));
  return states;
}

template <typename T>
Tensor<T> SearchCell<T>::forward_cell(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx) {
  auto states = node_states(prev_prev, prev, ctx);
  return concat(std::vector<Tensor<T>>(states.begin() + 2, states.end()), 1);
}

template <typename T>
void SearchCell<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  Cell<T>::visit(prefix, fn);
  for (std::size_t e = 0; e < ops_.size(); ++e) {
    const auto& edge = topology_.edges()[e];
    ops_[e]->visit(nn::join_name(prefix, "edge" + std::to_string(edge.from) + "_" + std::to_string(edge.to)), fn);
  }
}

// ---------------------------------------------------------- DiscreteCell

template <typename T>
DiscreteCell<T>::DiscreteCell(const Genotype& genotype, const CellPlan& plan, RngState& rng)
    : Cell<T>(plan, rng),
      nodes_(genotype.nodes),
      edges_(plan.reduction ? genotype.reduce : genotype.normal),
      concat_(genotype.concat) {
  genotype.validate();
  for (const auto& e : edges_)
    ops_.push_back(search::build_candidate<T>(e.op, plan.channels, this->edge_stride(e.from), rng));
}

template <typename T>
Tensor<T> DiscreteCell<T>::forward_cell(const Tensor<T>& prev_prev, const Tensor<T>& prev, nn::ForwardContext& ctx) {
  auto [s0, s1] = this->preprocess(prev_prev, prev, ctx);
  std::vector<Tensor<T>> states{s0, s1};
  for (std::size_t to = 2; to < nodes_ + 2; ++to) {
    std::vector<Tensor<T>> terms;
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      if (edges_[k].to == to) terms.push_back(ops_[k]->forward(states[edges_[k].from], ctx));
    }
    states.push_back(sum_n(terms));
  }
  std::vector<Tensor<T>> outs;
  for (std::size_t n : concat_) outs.push_back(states[n]);
  return outs.size() == 1 ? outs.front() : concat(outs, 1);
}

template <typename T>
void DiscreteCell<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  Cell<T>::visit(prefix, fn);
  for (std::size_t k = 0; k < ops_.size(); ++k) {
    const auto& e = edges_[k];
    ops_[k]->visit(nn::join_name(prefix, "edge" + std::to_string(e.from) + "_" + std::to_string(e.to) + "." +
                                             std::string(search::op_name(e.op))),
                   fn);
  }
}

// ----------------------------------------------------------- CellNetwork

template <typename T>
CellNetwork<T>::CellNetwork(const NetworkConfig& cfg, RngState& rng)
    : cfg_(cfg),
      stem_conv_(nn::Conv2dSpec{cfg.input_channels, cfg.stem_multiplier * cfg.init_channels, 3, 1, 1}, rng),
      stem_bn_(cfg.stem_multiplier * cfg.init_channels) {
  cfg.validate();
}

template <typename T>
Tensor<T> CellNetwork<T>::stem(const Tensor<T>& x, nn::ForwardContext& ctx) {
  return stem_bn_.forward(stem_conv_.forward(x, ctx), ctx);
}

template <typename T>
Tensor<T> CellNetwork<T>::forward_cell(std::size_t t, const Tensor<T>& prev_prev, const Tensor<T>& prev,
                                       nn::ForwardContext& ctx) {
  return cells_.at(t)->forward_cell(prev_prev, prev, ctx);
}

template <typename T>
std::vector<Tensor<T>> CellNetwork<T>::states(const Tensor<T>& x, nn::ForwardContext& ctx) {
  Tensor<T> s = stem(x, ctx);
  std::vector<Tensor<T>> out{s, s};
  for (std::size_t t = 0; t < cells_.size(); ++t) out.push_back(forward_cell(t, out[out.size() - 2], out.back(), ctx));
  return out;
}

template <typename T>
Tensor<T> CellNetwork<T>::forward(const Tensor<T>& x, nn::ForwardContext& ctx) {
  Tensor<T> s = stem(x, ctx);
  Tensor<T> prev_prev = s, prev = s;
  for (auto& c : cells_) {
    Tensor<T> next = c->forward_cell(prev_prev, prev, ctx);
    prev_prev = std::move(prev);
    prev = std::move(next);
  }
  return prev;
}

template <typename T>
void CellNetwork<T>::visit(const std::string& prefix, const nn::TensorVisitor<T>& fn) {
  stem_conv_.visit(nn::join_name(prefix, "stem.conv"), fn);
  stem_bn_.visit(nn::join_name(prefix, "stem.bn"), fn);
  for (std::size_t t = 0; t < cells_.size(); ++t) cells_[t]->visit(nn::join_name(prefix, "cell" + std::to_string(t)), fn);
}

// --------------------------------------------------------- SearchNetwork

template <typename T>
SearchNetwork<T>::SearchNetwork(const NetworkConfig& cfg, RngState& rng, double alpha_scale)
    : CellNetwork<T>(cfg, rng),
      alpha_normal_(search::alpha_init<T>(rng, CellTopology::edge_count(cfg.nodes), alpha_scale)),
      alpha_reduce_(search::alpha_init<T>(rng, CellTopology::edge_count(cfg.nodes), alpha_scale)) {
  const CellTopology topology(cfg.nodes);
  for (const auto& plan : channel_plan(cfg, cfg.nodes)) {
    this->cells_.push_back(
        std::make_unique<SearchCell<T>>(topology, plan, plan.reduction ? alpha_reduce_ : alpha_normal_, rng));
  }
}

template <typename T>
Genotype SearchNetwork<T>::genotype() const {
  return derive_genotype(alpha_normal_.logits, alpha_reduce_.logits, this->cfg_.nodes);
}

// ------------------------------------------------------- DiscreteNetwork

template <typename T>
DiscreteNetwork<T>::DiscreteNetwork(const NetworkConfig& cfg, const Genotype& genotype, RngState& rng)
    : CellNetwork<T>(cfg, rng), genotype_(genotype) {
  genotype.validate();
  if (genotype.nodes != cfg.nodes) {
    throw Error("genotype has " + std::to_string(genotype.nodes) + " intermediate nodes, network expects " +
                std::to_string(cfg.nodes));
  }
  for (const auto& plan : channel_plan(cfg, genotype.concat.size()))
    this->cells_.push_back(std::make_unique<DiscreteCell<T>>(genotype, plan, rng));
}

#define SERDARTS_INSTANTIATE_CELL(T) \
  template class Cell<T>;            \
  template class SearchCell<T>;      \
  template class DiscreteCell<T>;    \
  template class CellNetwork<T>;     \
  template class SearchNetwork<T>;   \
  template class DiscreteNetwork<T>;

SERDARTS_INSTANTIATE_CELL(float)
SERDARTS_INSTANTIATE_CELL(double)

#undef SERDARTS_INSTANTIATE_CELL

}  // namespace serdarts::cell
