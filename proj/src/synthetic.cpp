#include "odp/synthetic.hpp"

#include <cmath>
#include <ostream>

#include "odp/common.hpp"

namespace odp {

void validate_synthetic(const SyntheticSpec& spec) {
    if (spec.days < 1) throw ConfigError("synthetic days must be at least 1");
    if (static_cast<int>(spec.profile.size()) != spec.grid.slots_per_day())
        throw ConfigError("daily profile must have one entry per slot (" +
                          std::to_string(spec.grid.slots_per_day()) + ")");
    for (double p : spec.profile)
        if (p < 0) throw ConfigError("daily profile entries must be nonnegative");
    if (spec.base_intensity < 0) throw ConfigError("base_intensity must be nonnegative");
    int n = spec.grid.n();
    for (const auto& [i, j, w] : spec.hotspots) {
        if (i < 0 || i >= n || j < 0 || j >= n)
            throw ConfigError("hotspot cell outside the grid");
        if (w < 0) throw ConfigError("hotspot intensity must be nonnegative");
    }
}

double intensity_at(const SyntheticSpec& spec, int src, int dst) {
    double v = spec.base_intensity;
    for (const auto& [i, j, w] : spec.hotspots)
        if (i == src && j == dst) v += w;
    return v;
}

long long run_synth(const SyntheticSpec& spec, std::ostream& out) {
    validate_synthetic(spec);
    Rng rng(spec.seed);
    const GridSpec& g = spec.grid;
    int n = g.n();
    int l = g.slots_per_day();
    std::int64_t slot_sec = g.slot_seconds();

    out << "pickup_datetime,origin_lat,origin_lng,dest_lat,dest_lng\n";
    long long written = 0;
    for (int t = 1; t <= spec.T(); ++t) {
        std::int64_t slot_start = spec.start_time + static_cast<std::int64_t>(t - 1) * slot_sec;
        double mul = spec.profile[(t - 1) % l];
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double lambda = intensity_at(spec, i, j) * mul;
                long count = spec.poisson ? rng.poisson(lambda) : std::lround(lambda);
                for (long k = 0; k < count; ++k) {
                    // Spread timestamps evenly across the open slot interior.
                    std::int64_t offset = (k + 1) * slot_sec / (count + 1);
                    if (offset >= slot_sec) offset = slot_sec - 1;
                    out << format_timestamp(slot_start + offset) << ","
                        << format_double(g.center_lat_of(i)) << ","
                        << format_double(g.center_lng_of(i)) << ","
                        << format_double(g.center_lat_of(j)) << ","
                        << format_double(g.center_lng_of(j)) << "\n";
                    ++written;
                }
            }
        }
    }
    return written;
}

}  // namespace odp
