#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rissim {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline bool operator==(const Point3& a, const Point3& b) {
  return a.x == b.x && a.y == b.y && a.z == b.z;
}

inline double distance(const Point3& a, const Point3& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

// Thrown when a requested parking layout cannot be tiled into spaces.
struct invalid_layout : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Planar region of interest discretized into nx*ny square cells, lying in the
// z = center.z plane.  Unit q = row*nx + col, rows counted along +y, columns
// along +x, with the whole block centered on `center`.
struct RoiGrid {
  int nx = 0;
  int ny = 0;
  double cell_size = 0.0;
  Point3 center;

  int unit_count() const { return nx * ny; }

  int unit_index(int col, int row) const { return row * nx + col; }

  std::pair<int, int> unit_col_row(int q) const { return {q % nx, q / nx}; }

  Point3 unit_center(int q) const {
    const auto [col, row] = unit_col_row(q);
    return {center.x + (col + 0.5 - nx / 2.0) * cell_size,
            center.y + (row + 0.5 - ny / 2.0) * cell_size, center.z};
  }

  std::vector<Point3> unit_centers() const {
    std::vector<Point3> out(static_cast<std::size_t>(unit_count()));
    for (int q = 0; q < unit_count(); ++q) out[static_cast<std::size_t>(q)] = unit_center(q);
    return out;
  }
};

inline RoiGrid build_grid(int nx, int ny, double cell_size, Point3 center) {
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("build_grid: nx and ny must be >= 1");
  if (!(cell_size > 0.0))
    throw std::invalid_argument("build_grid: cell_size must be > 0");
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(center.z))
    throw std::invalid_argument("build_grid: center must be finite");
  return {nx, ny, cell_size, center};
}

// One parking space: C grid units that are occupied/released together.
struct ParkingSpace {
  int id = 0;
  std::vector<int> units;  // ascending unit indices
};

struct ParkingLayout {
  std::vector<ParkingSpace> spaces;
  std::vector<int> lane_units;  // ascending; units never occupied by a vehicle
  int unit_count = 0;           // Q of the grid the layout was built on

  int space_count() const { return static_cast<int>(spaces.size()); }

  int units_per_space() const {
    return spaces.empty() ? 0 : static_cast<int>(spaces.front().units.size());
  }
};

// Rows listed in `lane_rows` become driving lanes; every remaining row must
// pair up with the next remaining row so each space spans 2 vertically
// adjacent units (a vehicle footprint of one column x two rows).  Space ids
// count up column-by-column within each row pair, bottom pair first.
inline ParkingLayout build_parking_layout(const RoiGrid& grid,
                                          const std::vector<int>& lane_rows) {
  const std::set<int> lanes(lane_rows.begin(), lane_rows.end());
  for (int r : lanes) {
    if (r < 0 || r >= grid.ny)
      throw invalid_layout("build_parking_layout: lane row " + std::to_string(r) +
                           " outside grid of " + std::to_string(grid.ny) + " rows");
  }

  std::vector<int> parking_rows;
  for (int r = 0; r < grid.ny; ++r)
    if (!lanes.count(r)) parking_rows.push_back(r);
  if (parking_rows.size() % 2 != 0)
    throw invalid_layout("build_parking_layout: odd number of non-lane rows");
  for (std::size_t i = 0; i + 1 < parking_rows.size(); i += 2) {
    if (parking_rows[i + 1] != parking_rows[i] + 1)
      throw invalid_layout("build_parking_layout: non-lane rows " +
                           std::to_string(parking_rows[i]) + " and " +
                           std::to_string(parking_rows[i + 1]) +
                           " are not vertically adjacent");
  }

  ParkingLayout layout;
  layout.unit_count = grid.unit_count();
  for (std::size_t i = 0; i + 1 < parking_rows.size(); i += 2) {
    for (int col = 0; col < grid.nx; ++col) {
      ParkingSpace space;
      space.id = layout.space_count();
      space.units = {grid.unit_index(col, parking_rows[i]),
                     grid.unit_index(col, parking_rows[i + 1])};
      layout.spaces.push_back(std::move(space));
    }
  }
  for (int r : lanes)
    for (int col = 0; col < grid.nx; ++col)
      layout.lane_units.push_back(grid.unit_index(col, r));
  std::sort(layout.lane_units.begin(), layout.lane_units.end());
  return layout;
}

// Rectangular reflecting panel parallel to the ground plane (all elements share
// center.z).  Element m = r*cols + c, rows along +y, columns along +x.
struct PlanarArray {
  Point3 center;
  int rows = 0;
  int cols = 0;
  double pitch = 0.0;

  int element_count() const { return rows * cols; }

  Point3 element_center(int m) const {
    const int r = m / cols;
    const int c = m % cols;
    return {center.x + (c - (cols - 1) / 2.0) * pitch,
            center.y + (r - (rows - 1) / 2.0) * pitch, center.z};
  }

  std::vector<Point3> element_centers() const {
    std::vector<Point3> out(static_cast<std::size_t>(element_count()));
    for (int m = 0; m < element_count(); ++m) out[static_cast<std::size_t>(m)] = element_center(m);
    return out;
  }
};

inline PlanarArray build_ris_array(Point3 center, int rows, int cols, double pitch) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("build_ris_array: rows and cols must be >= 1");
  if (!(pitch > 0.0))
    throw std::invalid_argument("build_ris_array: pitch must be > 0");
  if (!std::isfinite(center.x) || !std::isfinite(center.y) || !std::isfinite(center.z))
    throw std::invalid_argument("build_ris_array: center must be finite");
  return {center, rows, cols, pitch};
}

}  // namespace rissim
