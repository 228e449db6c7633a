#include "mghl/metrics.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mghl {

const char* const kMetricsHeader =
    "global_step,episode_index,ext_return_raw,ext_return_scaled,int_return_pc,int_return_dc,int_return_fc,"
    "int_return_rand,policy_entropy,value_loss,policy_loss,wallclock_s";

const char* const kEpisodesHeader =
    "global_step,episode_index,actor,length,ext_return_raw,ext_return_scaled,int_return_pc,int_return_dc,"
    "int_return_fc,int_return_rand";

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

std::optional<double> parse_opt(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  return parse_real(s, line);
}

template <typename Fn>
void for_each_data_line(std::istream& in, const char* header, std::size_t fields, Fn&& fn) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error("line 1: unexpected csv header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != fields) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected " + std::to_string(fields) +
                               " fields, got " + std::to_string(f.size()));
    }
    fn(f, lineno);
  }
}

}  // namespace

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.global_step << ',' << r.episode_index << ',' << opt(r.ext_return_raw) << ',' << opt(r.ext_return_scaled)
      << ',' << opt(r.int_return_pc) << ',' << opt(r.int_return_dc) << ',' << opt(r.int_return_fc) << ','
      << opt(r.int_return_rand) << ',' << opt(r.policy_entropy) << ',' << opt(r.value_loss) << ','
      << opt(r.policy_loss) << ',' << opt(r.wallclock_s) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricsRow> rows;
  for_each_data_line(in, kMetricsHeader, 12, [&](const std::vector<std::string>& f, std::size_t n) {
    MetricsRow r;
    r.global_step = parse_uint(f[0], n);
    r.episode_index = parse_uint(f[1], n);
    r.ext_return_raw = parse_opt(f[2], n);
    r.ext_return_scaled = parse_opt(f[3], n);
    r.int_return_pc = parse_opt(f[4], n);
    r.int_return_dc = parse_opt(f[5], n);
    r.int_return_fc = parse_opt(f[6], n);
    r.int_return_rand = parse_opt(f[7], n);
    r.policy_entropy = parse_opt(f[8], n);
    r.value_loss = parse_opt(f[9], n);
    r.policy_loss = parse_opt(f[10], n);
    r.wallclock_s = parse_opt(f[11], n);
    if (!rows.empty() && r.global_step <= rows.back().global_step) {
      throw std::runtime_error("line " + std::to_string(n) + ": global_step not increasing");
    }
    rows.push_back(r);
  });
  return rows;
}

void write_episodes_header(std::ostream& out) { out << kEpisodesHeader << '\n'; }

void write_episode_row(std::ostream& out, const EpisodeRecord& e) {
  out << e.global_step << ',' << e.index << ',' << e.actor << ',' << e.length << ',' << format_real(e.ext_return_raw)
      << ',' << format_real(e.ext_return_scaled);
  for (const auto& v : e.int_returns) out << ',' << opt(v);
  out << '\n';
}

std::vector<EpisodeRecord> read_episodes_csv(std::istream& in) {
  std::vector<EpisodeRecord> rows;
  for_each_data_line(in, kEpisodesHeader, 10, [&](const std::vector<std::string>& f, std::size_t n) {
    EpisodeRecord e;
    e.global_step = parse_uint(f[0], n);
    e.index = parse_uint(f[1], n);
    e.actor = parse_uint(f[2], n);
    e.length = parse_uint(f[3], n);
    e.ext_return_raw = parse_real(f[4], n);
    e.ext_return_scaled = parse_real(f[5], n);
    for (std::size_t i = 0; i < 4; ++i) e.int_returns[i] = parse_opt(f[6 + i], n);
    rows.push_back(e);
  });
  return rows;
}

}  // namespace mghl
