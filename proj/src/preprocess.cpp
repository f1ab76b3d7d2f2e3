#include "odp/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>

#include "odp/common.hpp"

namespace odp {

int GridSpec::slots_per_day() const {
    return static_cast<int>(86400 / slot_seconds());
}

std::int64_t GridSpec::slot_seconds() const {
    return std::llround(slot_hours * 3600.0);
}

GridSpec make_grid_spec(double lat_min, double lat_max, double lng_min, double lng_max,
                        int rows, int cols, double slot_hours) {
    if (!(lat_min < lat_max) || !(lng_min < lng_max))
        throw ConfigError("grid bounds must satisfy lat_min < lat_max and lng_min < lng_max");
    if (rows < 1 || cols < 1) throw ConfigError("grid must have at least one row and column");
    if (!(slot_hours > 0)) throw ConfigError("slot_hours must be positive");
    std::int64_t slot_sec = std::llround(slot_hours * 3600.0);
    if (slot_sec <= 0 || 86400 % slot_sec != 0)
        throw ConfigError("slot length must divide 24 hours");
    return GridSpec{lat_min, lat_max, lng_min, lng_max, rows, cols, slot_hours};
}

std::optional<int> locate(const GridSpec& g, double lat, double lng) {
    if (lat < g.lat_min || lat > g.lat_max || lng < g.lng_min || lng > g.lng_max)
        return std::nullopt;
    // Row 0 sits at lat_max. Floor arithmetic puts an interior boundary point
    // into the southern/eastern cell, which is the one with the larger index;
    // clamping keeps the outer edges inclusive.
    int row = static_cast<int>(std::floor((g.lat_max - lat) / (g.lat_max - g.lat_min) * g.rows));
    int col = static_cast<int>(std::floor((lng - g.lng_min) / (g.lng_max - g.lng_min) * g.cols));
    row = std::clamp(row, 0, g.rows - 1);
    col = std::clamp(col, 0, g.cols - 1);
    return row * g.cols + col;
}

double haversine_km(double lat1, double lng1, double lat2, double lng2) {
    constexpr double kRadiusKm = 6371.0;
    constexpr double kDeg2Rad = M_PI / 180.0;
    double phi1 = lat1 * kDeg2Rad, phi2 = lat2 * kDeg2Rad;
    double dphi = (lat2 - lat1) * kDeg2Rad;
    double dlmb = (lng2 - lng1) * kDeg2Rad;
    double sp = std::sin(dphi / 2), sl = std::sin(dlmb / 2);
    double a = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
    return 2.0 * kRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

Eigen::MatrixXd center_distances_km(const GridSpec& g) {
    int n = g.n();
    Eigen::MatrixXd r(n, n);
    for (int i = 0; i < n; ++i) {
        r(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            double d = haversine_km(g.center_lat_of(i), g.center_lng_of(i),
                                    g.center_lat_of(j), g.center_lng_of(j));
            r(i, j) = d;
            r(j, i) = d;
        }
    }
    return r;
}

void ODGraph::add(int src, int dst, int count) {
    if (count == 0) return;
    auto& row = rows_[src];
    auto it = std::lower_bound(row.begin(), row.end(), dst,
                               [](const auto& p, int d) { return p.first < d; });
    if (it != row.end() && it->first == dst) {
        it->second += count;
        if (it->second == 0) row.erase(it);
    } else {
        row.insert(it, {dst, count});
    }
}

int ODGraph::at(int src, int dst) const {
    const auto& row = rows_[src];
    auto it = std::lower_bound(row.begin(), row.end(), dst,
                               [](const auto& p, int d) { return p.first < d; });
    return (it != row.end() && it->first == dst) ? it->second : 0;
}

Eigen::VectorXd ODGraph::demand() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n());
    for (int i = 0; i < n(); ++i)
        for (const auto& [_, c] : rows_[i]) d[i] += c;
    return d;
}

Eigen::VectorXd ODGraph::col_sums() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n());
    for (int i = 0; i < n(); ++i)
        for (const auto& [j, c] : rows_[i]) d[j] += c;
    return d;
}

Eigen::MatrixXd ODGraph::dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n(), n());
    for (int i = 0; i < n(); ++i)
        for (const auto& [j, c] : rows_[i]) m(i, j) = c;
    return m;
}

ODGraph ODGraph::transposed() const {
    ODGraph t(n());
    for (int i = 0; i < n(); ++i)
        for (const auto& [j, c] : rows_[i]) t.rows_[j].push_back({i, c});
    // Row order of the transpose is already sorted: sources are visited in
    // increasing order.
    return t;
}

long long ODGraph::total() const {
    long long s = 0;
    for (int i = 0; i < n(); ++i)
        for (const auto& [_, c] : rows_[i]) s += c;
    return s;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
    auto fields = split(line, delim);
    for (auto& f : fields) f = trim(f);
    return fields;
}

}  // namespace

ParseResult parse_trips(std::istream& in, const ColumnMap& cols) {
    ParseResult out;
    std::string line;
    if (!std::getline(in, line)) throw IoError("trip file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line, cols.delimiter);

    auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw IoError("trip file has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::size_t c_time = find_col(cols.pickup_time);
    std::size_t c_olat = find_col(cols.o_lat);
    std::size_t c_olng = find_col(cols.o_lng);
    std::size_t c_dlat = find_col(cols.d_lat);
    std::size_t c_dlng = find_col(cols.d_lng);
    std::size_t need = std::max({c_time, c_olat, c_olng, c_dlat, c_dlng}) + 1;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line, cols.delimiter);
        if (f.size() < need) {
            ++out.skipped;
            continue;
        }
        auto t = parse_timestamp(f[c_time]);
        auto ola = to_double(f[c_olat]);
        auto oln = to_double(f[c_olng]);
        auto dla = to_double(f[c_dlat]);
        auto dln = to_double(f[c_dlng]);
        if (!t || !ola || !oln || !dla || !dln ||
            std::abs(*ola) > 90 || std::abs(*dla) > 90 ||
            std::abs(*oln) > 180 || std::abs(*dln) > 180) {
            ++out.skipped;
            continue;
        }
        out.requests.push_back({*t, *ola, *oln, *dla, *dln});
    }
    return out;
}

ODSequence build_od_sequence(const std::vector<Request>& requests, const GridSpec& g,
                             std::int64_t start_time, int T) {
    ODSequence seq;
    seq.graphs.assign(T, ODGraph(g.n()));
    std::int64_t slot_sec = g.slot_seconds();
    for (const auto& r : requests) {
        std::int64_t off = r.time - start_time;
        if (off < 0) {
            ++seq.dropped;
            continue;
        }
        std::int64_t slot = off / slot_sec + 1;  // slots are 1-based
        if (slot < 1 || slot > T) {
            ++seq.dropped;
            continue;
        }
        auto src = locate(g, r.o_lat, r.o_lng);
        auto dst = locate(g, r.d_lat, r.d_lng);
        if (!src || !dst) {
            ++seq.dropped;
            continue;
        }
        seq.graphs[slot - 1].add(*src, *dst);
    }
    return seq;
}

int feature_dim(const GridSpec& g) {
    return 3 + 7 + g.slots_per_day() + 1 + 4 + 2;
}

Eigen::MatrixXd build_features(const GridSpec& g, const ODGraph& graph,
                               std::int64_t start_time, int slot) {
    int n = g.n();
    int l = g.slots_per_day();
    int d_f = feature_dim(g);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, d_f);

    std::int64_t slot_start = start_time + static_cast<std::int64_t>(slot - 1) * g.slot_seconds();
    int dow = day_of_week_mon0(slot_start);
    std::int64_t sec_of_day = ((slot_start % 86400) + 86400) % 86400;
    int slot_of_day = static_cast<int>(sec_of_day / g.slot_seconds());
    int hour = static_cast<int>(sec_of_day / 3600);
    int period = hour < 6 ? 0 : hour < 12 ? 1 : hour < 18 ? 2 : 3;

    Eigen::VectorXd outd = graph.demand();
    Eigen::VectorXd ind = graph.col_sums();
    double out_max = std::max(1.0, outd.maxCoeff());
    double in_max = std::max(1.0, ind.maxCoeff());

    double lat_range = g.lat_max - g.lat_min;
    double lng_range = g.lng_max - g.lng_min;

    for (int i = 0; i < n; ++i) {
        F(i, 0) = (g.center_lat_of(i) - g.lat_min) / lat_range;
        F(i, 1) = (g.center_lng_of(i) - g.lng_min) / lng_range;
        F(i, 2) = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        F(i, 3 + dow) = 1.0;
        F(i, 10 + slot_of_day) = 1.0;
        F(i, 10 + l) = dow < 5 ? 1.0 : 0.0;
        F(i, 10 + l + 1 + period) = 1.0;
        F(i, d_f - 2) = outd[i] / out_max;
        F(i, d_f - 1) = ind[i] / in_max;
    }
    return F;
}

}  // namespace odp
