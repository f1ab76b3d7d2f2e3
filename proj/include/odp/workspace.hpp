#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "odp/neighborhoods.hpp"
#include "odp/preprocess.hpp"

namespace odp {

/// A preprocessed run loaded in memory. Feature matrices and neighborhood
/// views are derived deterministically from the graphs and cached on first
/// use; the geographic radius and epsilon are fixed at construction.
class Dataset {
public:
    Dataset(GridSpec spec, std::int64_t start_time, std::vector<ODGraph> graphs,
            double geo_radius_km, double epsilon);

    const GridSpec& spec() const { return spec_; }
    int T() const { return static_cast<int>(graphs_.size()); }
    int n() const { return spec_.n(); }
    std::int64_t start_time() const { return start_time_; }
    double geo_radius_km() const { return geo_radius_km_; }
    double epsilon() const { return epsilon_; }

    const std::vector<ODGraph>& graphs() const { return graphs_; }
    const ODGraph& graph(int slot) const { return graphs_.at(slot - 1); }

    const Eigen::MatrixXd& features(int slot) const;
    const NeighborhoodSet& views(int slot) const;

    Eigen::VectorXd demand(int slot) const { return graph(slot).demand(); }
    Eigen::MatrixXd dense(int slot) const { return graph(slot).dense(); }

    const Eigen::MatrixXd& distances() const { return dist_km_; }

private:
    GridSpec spec_;
    std::int64_t start_time_;
    std::vector<ODGraph> graphs_;
    double geo_radius_km_;
    double epsilon_;
    Eigen::MatrixXd dist_km_;
    mutable std::map<int, Eigen::MatrixXd> feat_cache_;
    mutable std::map<int, NeighborhoodSet> view_cache_;
};

/// Write a preprocessed workspace: manifest.txt plus od_<t>.txt ("i j count",
/// sorted) and feat_<t>.txt (dense rows) for every slot. Deterministic and
/// byte-stable for identical inputs.
void write_workspace(const std::string& dir, const GridSpec& spec, std::int64_t start_time,
                     const ODSequence& seq, long long skipped);

/// Load a workspace written by write_workspace. Throws IoError when files
/// are missing, CompatError on unsupported format versions.
Dataset load_workspace(const std::string& dir, double geo_radius_km, double epsilon);

}  // namespace odp
