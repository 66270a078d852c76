#pragma once

#include <cstdint>

#include "periop/tree.hpp"

namespace periop {

// Plain recursive CART/Newton grower: one node at a time, rows re-sorted per
// node and feature. Slow but obviously correct; grow_tree must produce the
// same tree (up to node numbering) for the same inputs.
Tree grow_tree_reference(const EncodedMatrix& X, const RowStats& stats, const GrowParams& gp,
                         std::uint64_t seed);

}  // namespace periop
