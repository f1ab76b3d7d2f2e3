#pragma once

#include <cstdint>
#include <iosfwd>
#include <tuple>
#include <vector>

#include "odp/preprocess.hpp"

namespace odp {

/// Synthetic trip generator. Per-slot OD counts follow
/// intensity(i, j) * profile[slot-of-day]; with noise off the counts are
/// rounded expectations, making the series exactly day-periodic (so the
/// periodic historical average predicts it perfectly); with Poisson noise
/// they are draws with that mean.
struct SyntheticSpec {
    GridSpec grid;
    std::int64_t start_time = 0;
    int days = 21;
    std::uint64_t seed = 42;
    double base_intensity = 2.0;
    std::vector<double> profile;  // length = slots per day
    bool poisson = false;
    std::vector<std::tuple<int, int, double>> hotspots;  // (src, dst, extra intensity)

    int T() const { return days * grid.slots_per_day(); }
};

/// Validates the settings (profile length, nonnegative intensities).
void validate_synthetic(const SyntheticSpec& spec);

/// Expected request intensity between two cells before the daily profile.
double intensity_at(const SyntheticSpec& spec, int src, int dst);

/// Write the trip CSV (header + one row per request). Origins and
/// destinations sit at cell centers; timestamps spread evenly inside each
/// slot. Returns the number of requests written. Deterministic per seed.
long long run_synth(const SyntheticSpec& spec, std::ostream& out);

}  // namespace odp
