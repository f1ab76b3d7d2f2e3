#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace odp {

/// Configuration problem (bad key, bad value, inconsistent settings). CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing or unreadable input. CLI exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Checkpoint/workspace/config shape mismatch. CLI exit code 3.
struct CompatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Prediction target whose history windows fall outside [1, T].
struct InvalidTarget : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- deterministic RNG -----------------------------------------------------
//
// SplitMix64 core with hand-rolled distributions so that a seed produces the
// same stream on every platform (std:: distributions are
// implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double uniform01();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n), n > 0. Rejection sampling, unbiased.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Poisson sample; Knuth's method, fine for the small rates used here.
    long poisson(double lambda);

    /// Fisher-Yates shuffle with this generator.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// ---- timestamps ------------------------------------------------------------
//
// Timestamps are civil wall-clock values treated as UTC throughout; no time
// zone conversion happens anywhere.

/// Days since 1970-01-01 for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int y, int m, int d);

/// Inverse of days_from_civil.
void civil_from_days(std::int64_t days, int& y, int& m, int& d);

/// Parse "YYYY-MM-DD HH:MM:SS" (or with 'T' separator) to epoch seconds.
/// Returns nullopt on malformed or out-of-range fields.
std::optional<std::int64_t> parse_timestamp(const std::string& s);

/// Format epoch seconds as "YYYY-MM-DD HH:MM:SS".
std::string format_timestamp(std::int64_t epoch);

/// Day of week with Monday as 0 ... Sunday as 6.
int day_of_week_mon0(std::int64_t epoch);

// ---- small string helpers --------------------------------------------------

std::vector<std::string> split(const std::string& s, char delim);
std::string trim(const std::string& s);

/// Shortest round-trip decimal form of a double ('.' decimal point).
std::string format_double(double v);

std::optional<double> to_double(const std::string& s);
std::optional<long long> to_int(const std::string& s);

}  // namespace odp
