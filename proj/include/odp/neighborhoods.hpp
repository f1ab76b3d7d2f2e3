#pragma once

#include <Eigen/Dense>
#include <vector>

#include "odp/preprocess.hpp"

namespace odp {

/// Weighted edges of one neighborhood, grouped by source cell.
/// For source i, neighbors() spans [offsets[i], offsets[i+1]) in `dst`/`w`.
/// Weights within a source sum to 1 whenever the source has any neighbor.
struct NeighborhoodView {
    std::vector<int> offsets;  // size n+1
    std::vector<int> dst;
    std::vector<double> w;

    int n() const { return static_cast<int>(offsets.size()) - 1; }
    int degree(int i) const { return offsets[i + 1] - offsets[i]; }
    int edge_count() const { return static_cast<int>(dst.size()); }
};

/// Forward neighborhood of a slot graph: for each source i, exactly the cells
/// j with g_ij > 0 (i itself only when g_ii > 0). Weight of j is (g_ij + eps)
/// normalized over the neighborhood, so cells i reaches often dominate.
NeighborhoodView forward_view(const ODGraph& g, double eps);

/// Backward neighborhood: neighbors of i are the cells j with g_ji > 0,
/// weighted by (g_ji + eps) normalized.
NeighborhoodView backward_view(const ODGraph& g, double eps);

/// Geographical neighborhood: cells within `radius_km` of i (excluding i),
/// weighted by inverse distance normalized over the neighborhood.
NeighborhoodView geo_view(const Eigen::MatrixXd& dist_km, double radius_km);

struct NeighborhoodSet {
    NeighborhoodView fwd;
    NeighborhoodView bwd;
    NeighborhoodView geo;
};

NeighborhoodSet build_neighborhoods(const ODGraph& g, const Eigen::MatrixXd& dist_km,
                                    double radius_km, double eps);

}  // namespace odp
