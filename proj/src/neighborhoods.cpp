#include "odp/neighborhoods.hpp"

#include <algorithm>

namespace odp {

namespace {

// Build a view from per-source lists of (dst, raw weight), normalizing the
// weights of each source to sum to 1.
NeighborhoodView from_lists(std::vector<std::vector<std::pair<int, double>>>&& lists) {
    NeighborhoodView v;
    int n = static_cast<int>(lists.size());
    v.offsets.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) v.offsets[i + 1] = v.offsets[i] + static_cast<int>(lists[i].size());
    v.dst.reserve(v.offsets[n]);
    v.w.reserve(v.offsets[n]);
    for (int i = 0; i < n; ++i) {
        double total = 0.0;
        for (const auto& [_, raw] : lists[i]) total += raw;
        for (const auto& [j, raw] : lists[i]) {
            v.dst.push_back(j);
            v.w.push_back(raw / total);
        }
    }
    return v;
}

}  // namespace

NeighborhoodView forward_view(const ODGraph& g, double eps) {
    int n = g.n();
    std::vector<std::vector<std::pair<int, double>>> lists(n);
    for (int i = 0; i < n; ++i) {
        // Membership is exactly {j | g_ij > 0}; a self-loop appears only when
        // the graph records one.
        for (const auto& [j, c] : g.row(i)) lists[i].push_back({j, c + eps});
    }
    return from_lists(std::move(lists));
}

NeighborhoodView backward_view(const ODGraph& g, double eps) {
    return forward_view(g.transposed(), eps);
}

NeighborhoodView geo_view(const Eigen::MatrixXd& dist_km, double radius_km) {
    int n = static_cast<int>(dist_km.rows());
    std::vector<std::vector<std::pair<int, double>>> lists(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            double r = dist_km(i, j);
            if (r <= radius_km && r > 0) lists[i].push_back({j, 1.0 / r});
        }
    }
    // A cell with no neighbor inside the radius keeps an empty list; the
    // attention layer treats it as contributing nothing.
    return from_lists(std::move(lists));
}

NeighborhoodSet build_neighborhoods(const ODGraph& g, const Eigen::MatrixXd& dist_km,
                                    double radius_km, double eps) {
    return {forward_view(g, eps), backward_view(g, eps), geo_view(dist_km, radius_km)};
}

}  // namespace odp
