// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "serdarts/search/op_kind.hpp"
#include "serdarts/tensor.hpp"

namespace serdarts::cell {

struct GenotypeEdge {
  search::OpKind op = search::OpKind::skip_connect;
  std::size_t from = 0;
  std::size_t to = 2;
  bool operator==(const GenotypeEdge&) const = default;
};

/// Discrete cell description for both cell kinds.
struct Genotype {
  std::size_t nodes = 4;
  std::vector<GenotypeEdge> normal;
  std::vector<GenotypeEdge> reduce;
  std::vector<std::size_t> concat;  // intermediate node ids forming the output

  bool operator==(const Genotype&) const = default;

  /// Every intermediate node has exactly two incoming edges from distinct
  /// earlier nodes, no edge carries `none`, and `concat` lists distinct
  /// intermediate nodes in increasing order.
  void validate() const;
};

/// Per edge, the best non-`none` candidate by softmaxed weight (lower op
/// index wins ties); per node, the two incoming edges with the largest
/// chosen weight (ties: lower op index, then lower source node). Retained
/// edges are listed by destination, then source.
template <typename T>
Genotype derive_genotype(const Tensor<T>& normal_logits, const Tensor<T>& reduce_logits, std::size_t nodes);

/// Canonical JSON: sorted keys, edges as [op, from, to]. Byte-stable.
std::string export_genotype(const Genotype& g);
Genotype import_genotype(const std::string& text);

/// One digraph per cell kind. Inputs are labelled "0" and "1", intermediate
/// nodes "n2".."n{N+1}", edges by operation name.
std::string export_dot(const Genotype& g);

}  // namespace serdarts::cell
