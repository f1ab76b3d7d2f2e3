#include "odp/workspace.hpp"

#include <filesystem>
#include <fstream>

#include "odp/common.hpp"
#include "odp/config.hpp"

namespace odp {

Dataset::Dataset(GridSpec spec, std::int64_t start_time, std::vector<ODGraph> graphs,
                 double geo_radius_km, double epsilon)
    : spec_(spec),
      start_time_(start_time),
      graphs_(std::move(graphs)),
      geo_radius_km_(geo_radius_km),
      epsilon_(epsilon),
      dist_km_(center_distances_km(spec)) {}

const Eigen::MatrixXd& Dataset::features(int slot) const {
    auto it = feat_cache_.find(slot);
    if (it == feat_cache_.end())
        it = feat_cache_.emplace(slot, build_features(spec_, graph(slot), start_time_, slot)).first;
    return it->second;
}

const NeighborhoodSet& Dataset::views(int slot) const {
    auto it = view_cache_.find(slot);
    if (it == view_cache_.end())
        it = view_cache_
                 .emplace(slot, build_neighborhoods(graph(slot), dist_km_, geo_radius_km_, epsilon_))
                 .first;
    return it->second;
}

void write_workspace(const std::string& dir, const GridSpec& spec, std::int64_t start_time,
                     const ODSequence& seq, long long skipped) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream m(dir + "/manifest.txt");
        if (!m) throw IoError("cannot write " + dir + "/manifest.txt");
        m << "format_version=1\n"
          << "lat_min=" << format_double(spec.lat_min) << "\n"
          << "lat_max=" << format_double(spec.lat_max) << "\n"
          << "lng_min=" << format_double(spec.lng_min) << "\n"
          << "lng_max=" << format_double(spec.lng_max) << "\n"
          << "rows=" << spec.rows << "\n"
          << "cols=" << spec.cols << "\n"
          << "slot_hours=" << format_double(spec.slot_hours) << "\n"
          << "start_time=" << format_timestamp(start_time) << "\n"
          << "slots=" << seq.graphs.size() << "\n"
          << "n=" << spec.n() << "\n"
          << "feature_dim=" << feature_dim(spec) << "\n"
          << "dropped=" << seq.dropped << "\n"
          << "skipped=" << skipped << "\n";
    }

    for (std::size_t t = 1; t <= seq.graphs.size(); ++t) {
        const ODGraph& g = seq.graphs[t - 1];
        std::ofstream od(dir + "/od_" + std::to_string(t) + ".txt");
        if (!od) throw IoError("cannot write od_" + std::to_string(t) + ".txt");
        for (int i = 0; i < g.n(); ++i)
            for (const auto& [j, c] : g.row(i)) od << i << " " << j << " " << c << "\n";

        Eigen::MatrixXd F =
            build_features(spec, g, start_time, static_cast<int>(t));
        std::ofstream ft(dir + "/feat_" + std::to_string(t) + ".txt");
        if (!ft) throw IoError("cannot write feat_" + std::to_string(t) + ".txt");
        for (int i = 0; i < F.rows(); ++i) {
            for (int j = 0; j < F.cols(); ++j) {
                if (j) ft << " ";
                ft << format_double(F(i, j));
            }
            ft << "\n";
        }
    }
}

Dataset load_workspace(const std::string& dir, double geo_radius_km, double epsilon) {
    KvConfig manifest = KvConfig::from_file(dir + "/manifest.txt");
    long long version = manifest.get_int("format_version", -1);
    if (version != 1)
        throw CompatError("unsupported workspace format_version " + std::to_string(version) +
                          " in " + dir);

    GridSpec spec = make_grid_spec(
        manifest.get_double("lat_min", 0), manifest.get_double("lat_max", 0),
        manifest.get_double("lng_min", 0), manifest.get_double("lng_max", 0),
        static_cast<int>(manifest.get_int("rows", 0)), static_cast<int>(manifest.get_int("cols", 0)),
        manifest.get_double("slot_hours", 1));

    auto start = parse_timestamp(manifest.require_str("start_time"));
    if (!start) throw IoError("manifest start_time is malformed");
    int T = static_cast<int>(manifest.get_int("slots", 0));
    if (T < 1) throw IoError("manifest slots must be positive");

    std::vector<ODGraph> graphs;
    graphs.reserve(T);
    for (int t = 1; t <= T; ++t) {
        std::string path = dir + "/od_" + std::to_string(t) + ".txt";
        std::ifstream in(path);
        if (!in) throw IoError("missing workspace file: " + path);
        ODGraph g(spec.n());
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            auto f = split(line, ' ');
            if (f.size() != 3) throw IoError(path + ": expected 'i j count' lines");
            auto i = to_int(f[0]), j = to_int(f[1]), c = to_int(f[2]);
            if (!i || !j || !c || *i < 0 || *i >= spec.n() || *j < 0 || *j >= spec.n())
                throw IoError(path + ": bad triplet '" + line + "'");
            g.add(static_cast<int>(*i), static_cast<int>(*j), static_cast<int>(*c));
        }
        graphs.push_back(std::move(g));
    }
    return Dataset(spec, *start, std::move(graphs), geo_radius_km, epsilon);
}

}  // namespace odp
