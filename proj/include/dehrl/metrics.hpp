#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dehrl/hierarchy.hpp"

namespace dehrl {

struct EpisodeEntry {
    std::uint64_t index = 0;
    double reward = 0.0;
    std::uint64_t length = 0;
    std::uint64_t step = 0;
};

class EpisodeLog {
public:
    /// Throws std::invalid_argument unless the index exceeds the previous one.
    void push(const EpisodeEntry& e);
    const std::vector<EpisodeEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<EpisodeEntry> entries_;
};

/// Mean episode reward over the last min(100, N) episodes.
double final_performance_score(const EpisodeLog& log);
/// Mean episode reward over every episode.
double learning_speed_score(const EpisodeLog& log);

enum class ProbeLabel : std::uint8_t { North = 0, South = 1, East = 2, West = 3, Stay = 4, Other = 5 };
std::string to_string(ProbeLabel l);

/// Body displacement class of one rollout: a single cell in a compass
/// direction, no displacement (stay), or anything else.
ProbeLabel displacement_label(int d_row, int d_col);

struct ProbeResult {
    /// One label per upper action.
    std::vector<ProbeLabel> labels;
    /// Per upper action, how many rollouts fell in each displacement class.
    std::vector<std::array<std::size_t, 6>> counts;
    /// Number of distinct labels among north/south/east/west/stay.
    std::size_t distinct_useful() const;
};

/// Level-0 action for (observation, upper action, step within the macro-step).
using SubpolicyFn = std::function<std::size_t(const Observation& obs, std::size_t upper, std::size_t t)>;

/// Rolls `policy` for `period` primitive steps from `repeats` fresh resets of
/// `env` per upper action. A subpolicy's label is the displacement class that
/// holds a strict majority of its rollouts, otherwise `other`. Throws
/// std::invalid_argument unless `env` is OverCooked.
ProbeResult subpolicy_probe(const SubpolicyFn& policy, std::size_t upper_count, std::size_t period,
                            Environment& env, std::size_t repeats = 32);

/// Probe of level `level` of a trained hierarchy: the levels below act greedily
/// under each fixed level-`level` action for T^level primitive steps.
ProbeResult subpolicy_probe(const Hierarchy& h, Environment& env, std::size_t level = 1, std::size_t repeats = 32);

// ---------------------------------------------------------------------------
// Metrics stream: one "step,key,value" line per record.

struct MetricRecord {
    std::uint64_t step = 0;
    std::string key;
    double value = 0.0;
    bool operator==(const MetricRecord&) const = default;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);

void write_metric(std::ostream& out, const MetricRecord& rec);
/// Reads complete lines; a trailing partial line (concurrent append) is ignored.
/// Throws FormatError on a malformed complete line.
std::vector<MetricRecord> read_metrics(std::istream& in);

/// Episode rewards recorded in a metrics stream, in order.
EpisodeLog episode_log_from_metrics(const std::vector<MetricRecord>& records);

struct SeriesPoint {
    std::uint64_t step = 0;
    double value = 0.0;
    std::uint64_t seed = 0;
    bool operator==(const SeriesPoint&) const = default;
};

void write_series_csv(std::ostream& out, const std::vector<SeriesPoint>& points);
std::vector<SeriesPoint> read_series_csv(std::istream& in);

/// Self-contained SVG line chart: one raw trace per seed plus an exponential
/// moving average (factor `smoothing`) of each.
std::string render_svg(const std::string& title, const std::vector<SeriesPoint>& points, double smoothing = 0.99);

/// File-name-safe form of a metric key.
std::string metric_file_stem(const std::string& key);

/// Reads `<run>/seed_<s>/metrics.txt` for every seed directory and writes one CSV
/// and one SVG per metric key under `<run>/report/`. Returns the keys written.
std::vector<std::string> emit_report(const std::filesystem::path& run_dir);

}  // namespace dehrl
