#pragma once

#include <vector>

#include "ctlc/types.hpp"

namespace ctlc {

/// Adjacent low-dose recoveries of a slice: {predecessor, successor} for
/// interior indices, a single element at volume boundaries.
struct NeighborSet {
    std::vector<Image> slices;  // ordered: predecessor first when present

    size_t size() const { return slices.size(); }
};

/// One training unit: the low-dose FBP recovery, its neighbor set, and the
/// standard-dose ground truth.
struct SliceBatch {
    int index = 0;  // position within its volume block
    Image s;
    NeighborSet neighbors;
    Image target;
};

struct Dataset {
    std::vector<SliceBatch> train;
    std::vector<SliceBatch> val;
};

}  // namespace ctlc
