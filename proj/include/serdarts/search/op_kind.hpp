// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace serdarts::search {

/// Candidate operations on a cell edge. The order is fixed: it indexes the
/// columns of an alpha table and breaks argmax ties.
enum class OpKind : std::uint8_t {
  max_pool_3x3,
  avg_pool_3x3,
  sep_conv_3x3,
  sep_conv_5x5,
  dil_conv_3x3,
  dil_conv_5x5,
  skip_connect,
  none,
};

inline constexpr std::size_t kNumOps = 8;

inline constexpr std::array<OpKind, kNumOps> kAllOps{
    OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
    OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::skip_connect, OpKind::none,
};

constexpr std::size_t op_index(OpKind kind) { return static_cast<std::size_t>(kind); }

std::string_view op_name(OpKind kind);

/// Inverse of op_name; unknown names raise an error listing the vocabulary.
OpKind parse_op(std::string_view name);

}  // namespace serdarts::search
