#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mghl {

/// One line of metrics.csv. Rows are emitted every metrics_interval global
/// steps. Episode fields average the episodes finished inside the interval and
/// are empty when none finished; intrinsic fields are empty for inactive types.
struct MetricsRow {
  std::uint64_t global_step = 0;
  std::uint64_t episode_index = 0;  // episodes completed so far
  std::optional<double> ext_return_raw;
  std::optional<double> ext_return_scaled;
  std::optional<double> int_return_pc;
  std::optional<double> int_return_dc;
  std::optional<double> int_return_fc;
  std::optional<double> int_return_rand;
  std::optional<double> policy_entropy;
  std::optional<double> value_loss;
  std::optional<double> policy_loss;
  std::optional<double> wallclock_s;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Per-episode record kept alongside the interval rows.
struct EpisodeRecord {
  std::uint64_t global_step = 0;
  std::uint64_t index = 0;
  std::size_t actor = 0;
  std::size_t length = 0;
  double ext_return_raw = 0.0;
  double ext_return_scaled = 0.0;
  std::array<std::optional<double>, 4> int_returns;  // pc, dc, fc, rand
};

extern const char* const kMetricsHeader;
extern const char* const kEpisodesHeader;

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);
/// Throws std::runtime_error with the line number on malformed input.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

void write_episodes_header(std::ostream& out);
void write_episode_row(std::ostream& out, const EpisodeRecord& ep);
std::vector<EpisodeRecord> read_episodes_csv(std::istream& in);

/// Formats doubles so that parsing them back yields the same bits.
std::string format_real(double v);

}  // namespace mghl
