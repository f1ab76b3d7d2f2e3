#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace odp {

/// One ride request: pickup time plus origin/destination coordinates.
struct Request {
    std::int64_t time = 0;
    double o_lat = 0, o_lng = 0;
    double d_lat = 0, d_lng = 0;
};

/// Rectangular grid over a bounding box. Cells are indexed row-major from the
/// top-left corner (north-west): id = row * cols + col, row 0 at lat_max.
struct GridSpec {
    double lat_min = 0, lat_max = 0;
    double lng_min = 0, lng_max = 0;
    int rows = 0, cols = 0;
    double slot_hours = 1.0;

    int n() const { return rows * cols; }
    int slots_per_day() const;
    std::int64_t slot_seconds() const;

    double cell_height_deg() const { return (lat_max - lat_min) / rows; }
    double cell_width_deg() const { return (lng_max - lng_min) / cols; }

    /// Latitude of the center of a cell row (row 0 is northernmost).
    double center_lat(int row) const { return lat_max - (row + 0.5) * cell_height_deg(); }
    double center_lng(int col) const { return lng_min + (col + 0.5) * cell_width_deg(); }

    double center_lat_of(int id) const { return center_lat(id / cols); }
    double center_lng_of(int id) const { return center_lng(id % cols); }
};

/// Validates bounds, dimensions, and that the slot length divides 24 hours.
/// Throws ConfigError on violation.
GridSpec make_grid_spec(double lat_min, double lat_max, double lng_min, double lng_max,
                        int rows, int cols, double slot_hours);

/// Cell ID for a coordinate, or nullopt if outside the bounding box.
/// Cells are half-open: a point on an interior boundary belongs to the cell
/// with the larger index; the box's outer edges are inclusive.
std::optional<int> locate(const GridSpec& g, double lat, double lng);

/// Great-circle distance in kilometres (mean Earth radius 6371.0 km).
double haversine_km(double lat1, double lng1, double lat2, double lng2);

/// Symmetric n-by-n matrix of distances between cell centers.
Eigen::MatrixXd center_distances_km(const GridSpec& g);

/// Sparse OD counts for one time slot. Rows are kept sorted by destination.
class ODGraph {
public:
    explicit ODGraph(int n) : rows_(n) {}

    int n() const { return static_cast<int>(rows_.size()); }

    void add(int src, int dst, int count = 1);

    /// Count for (src, dst); 0 if absent.
    int at(int src, int dst) const;

    /// Sorted (dst, count) pairs with count > 0 for a source cell.
    const std::vector<std::pair<int, int>>& row(int src) const { return rows_[src]; }

    /// Out-demand per cell: row sums as a dense vector.
    Eigen::VectorXd demand() const;

    Eigen::VectorXd col_sums() const;

    Eigen::MatrixXd dense() const;

    ODGraph transposed() const;

    /// Total request count across all pairs.
    long long total() const;

private:
    std::vector<std::vector<std::pair<int, int>>> rows_;
};

/// Column layout of a trip CSV.
struct ColumnMap {
    std::string pickup_time = "pickup_datetime";
    std::string o_lat = "origin_lat";
    std::string o_lng = "origin_lng";
    std::string d_lat = "dest_lat";
    std::string d_lng = "dest_lng";
    char delimiter = ',';
};

struct ParseResult {
    std::vector<Request> requests;
    long long skipped = 0;
};

/// Parse a trip CSV with a header row. Rows with missing fields, unparsable
/// values, or coordinates outside [-90,90]x[-180,180] are counted in
/// `skipped`, not kept. Throws IoError if a mapped column is absent.
ParseResult parse_trips(std::istream& in, const ColumnMap& cols);

struct ODSequence {
    std::vector<ODGraph> graphs;  // graphs[t-1] holds slot t, t in [1, T]
    long long dropped = 0;        // requests outside the grid or time range
};

/// Bucket requests into T slot graphs. Slot t covers
/// [start + (t-1)*slot, start + t*slot); requests outside [1, T] or with an
/// endpoint outside the grid are dropped.
ODSequence build_od_sequence(const std::vector<Request>& requests, const GridSpec& g,
                             std::int64_t start_time, int T);

/// Per-cell feature matrix for one slot; rows are cells. Layout:
///   0..2    normalized center lat, center lng, cell id
///   3..9    day-of-week one-hot (Monday first)
///   10..    hour-of-slot one-hot (slots_per_day entries)
///   next    weekday flag
///   next 4  time-period one-hot: night [0,6), morning [6,12),
///           afternoon [12,18), evening [18,24)
///   last 2  out-degree and in-degree, scaled by the slot maximum
Eigen::MatrixXd build_features(const GridSpec& g, const ODGraph& graph,
                               std::int64_t start_time, int slot);

/// Feature dimensionality for a grid: 3 + 7 + slots_per_day + 1 + 4 + 2.
int feature_dim(const GridSpec& g);

}  // namespace odp
