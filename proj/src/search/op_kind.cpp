// SPDX-License-Identifier: Apache-2.0
#include "serdarts/search/op_kind.hpp"

#include "serdarts/tensor.hpp"

namespace serdarts::search {

namespace {
constexpr std::array<std::string_view, kNumOps> kNames{
    "max_pool_3x3", "avg_pool_3x3", "sep_conv_3x3", "sep_conv_5x5",
    "dil_conv_3x3", "dil_conv_5x5", "skip_connect", "none",
};
}  // namespace

std::string_view op_name(OpKind kind) { return kNames.at(op_index(kind)); }

OpKind parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kNumOps; ++i) {
    if (kNames[i] == name) return kAllOps[i];
  }
  std::string valid;
  for (auto n : kNames) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw Error("unknown operation '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace serdarts::search
