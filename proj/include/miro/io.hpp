#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "miro/core.hpp"

namespace miro::io {

/// Which optional CSV columns a cloud file carries. Column order is fixed:
/// x_nm,y_nm[,frame,cluster_id,class_id,coarse_id].
struct Columns {
  bool frame = false;
  bool cluster_id = false;
  bool class_id = false;
  bool coarse_id = false;
  friend bool operator==(const Columns&, const Columns&) = default;
};

struct CloudFile {
  /// Unlabeled files carry an all-noise truth and columns.cluster_id == false.
  LabeledCloud data;
  Columns columns;
};

CloudFile read_cloud(const std::filesystem::path& path);
CloudFile parse_cloud(const std::string& text);

/// Columns inferred from the cloud: frame when any point has one, cluster_id
/// always, class_id / coarse_id when present.
Columns columns_for(const LabeledCloud& cloud);

void write_cloud(const std::filesystem::path& path, const LabeledCloud& cloud);
void write_cloud(const std::filesystem::path& path, const LabeledCloud& cloud, const Columns& columns);
std::string format_cloud(const LabeledCloud& cloud, const Columns& columns);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Plain `x_nm,y_nm` table, used for collapsed coordinates.
void write_positions(const std::filesystem::path& path, std::span<const Vec2> positions);

/// Writes text to path via a temporary sibling and rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace miro::io
