#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcse/error.hpp"
#include "vcse/gridworld/env.hpp"

namespace vcse::trainer {

struct EpisodeRecord {
  std::int64_t step = 0;  // environment steps taken when the episode ended
  std::int64_t episode = 0;
  bool success = false;
  double ret = 0.0;
  double intrinsic_mean = 0.0;
  double beta = 0.0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct EvalCheckpoint {
  std::int64_t step = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;

  friend bool operator==(const EvalCheckpoint&, const EvalCheckpoint&) = default;
};

/// (x, y) visit counts over a fixed map, row-major.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(int x, int y) const { return counts[static_cast<std::size_t>(y * width + x)]; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;
};

struct RunMetrics {
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalCheckpoint> evals;
  std::optional<Heatmap> heatmap;
  std::int64_t total_steps = 0;
  std::int64_t updates = 0;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

inline Heatmap make_heatmap(int width, int height) {
  return Heatmap{width, height, std::vector<std::uint64_t>(static_cast<std::size_t>(width * height), 0)};
}

/// Counts one environment step at the pose's cell.
inline void record_heatmap(RunMetrics& metrics, const gridworld::AgentPose& pose) {
  if (!metrics.heatmap) throw DomainError("record_heatmap: metrics carry no heatmap");
  Heatmap& h = *metrics.heatmap;
  if (pose.x < 0 || pose.y < 0 || pose.x >= h.width || pose.y >= h.height) {
    throw DomainError("record_heatmap: pose outside the map");
  }
  ++h.counts[static_cast<std::size_t>(pose.y * h.width + pose.x)];
}

/// Share of visits landing strictly east of `column`.
inline double mass_beyond_column(const Heatmap& h, int column) {
  const std::uint64_t total = h.total();
  if (total == 0) return 0.0;
  std::uint64_t beyond = 0;
  for (int y = 0; y < h.height; ++y) {
    for (int x = column + 1; x < h.width; ++x) beyond += h.at(x, y);
  }
  return static_cast<double>(beyond) / static_cast<double>(total);
}

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline std::string metrics_csv(const RunMetrics& m) {
  std::ostringstream os;
  os << "step,episode,success,return,intrinsic_mean,beta\n";
  for (const auto& e : m.episodes) {
    os << e.step << ',' << e.episode << ',' << (e.success ? 1 : 0) << ',' << detail::fmt_double(e.ret) << ','
       << detail::fmt_double(e.intrinsic_mean) << ',' << detail::fmt_double(e.beta) << '\n';
  }
  return os.str();
}

inline std::string evals_csv(const RunMetrics& m) {
  std::ostringstream os;
  os << "step,success_rate,mean_return\n";
  for (const auto& e : m.evals) {
    os << e.step << ',' << detail::fmt_double(e.success_rate) << ',' << detail::fmt_double(e.mean_return) << '\n';
  }
  return os.str();
}

inline nlohmann::json heatmap_json(const Heatmap& h, const std::string& task) {
  nlohmann::json rows = nlohmann::json::array();
  for (int y = 0; y < h.height; ++y) {
    std::vector<std::uint64_t> row(h.counts.begin() + y * h.width, h.counts.begin() + (y + 1) * h.width);
    rows.push_back(row);
  }
  return {{"schema_version", 1}, {"task", task}, {"width", h.width}, {"height", h.height},
          {"total_steps", h.total()}, {"counts", rows}};
}

inline Heatmap heatmap_from_json(const nlohmann::json& j) {
  Heatmap h = make_heatmap(j.at("width").get<int>(), j.at("height").get<int>());
  const auto rows = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
  if (static_cast<int>(rows.size()) != h.height) throw ShapeError("heatmap row count mismatch");
  for (int y = 0; y < h.height; ++y) {
    if (static_cast<int>(rows[static_cast<std::size_t>(y)].size()) != h.width) throw ShapeError("heatmap row length mismatch");
    for (int x = 0; x < h.width; ++x) h.counts[static_cast<std::size_t>(y * h.width + x)] = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
  }
  return h;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace vcse::trainer
