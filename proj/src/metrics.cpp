#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "dehrl/metrics.hpp"

namespace dehrl {

void EpisodeLog::push(const EpisodeEntry& e) {
    if (!entries_.empty() && e.index <= entries_.back().index)
        throw std::invalid_argument("episode indices must be strictly increasing");
    entries_.push_back(e);
}

double final_performance_score(const EpisodeLog& log) {
    if (log.empty())
        throw std::invalid_argument("final_performance_score: empty episode log");
    const auto& e = log.entries();
    const std::size_t n = std::min<std::size_t>(100, e.size());
    double sum = 0.0;
    for (std::size_t i = e.size() - n; i < e.size(); ++i)
        sum += e[i].reward;
    return sum / static_cast<double>(n);
}

double learning_speed_score(const EpisodeLog& log) {
    if (log.empty())
        throw std::invalid_argument("learning_speed_score: empty episode log");
    double sum = 0.0;
    for (const auto& x : log.entries())
        sum += x.reward;
    return sum / static_cast<double>(log.size());
}

std::string to_string(ProbeLabel l) {
    switch (l) {
    case ProbeLabel::North:
        return "north";
    case ProbeLabel::South:
        return "south";
    case ProbeLabel::East:
        return "east";
    case ProbeLabel::West:
        return "west";
    case ProbeLabel::Stay:
        return "stay";
    case ProbeLabel::Other:
        return "other";
    }
    return "?";
}

ProbeLabel displacement_label(int d_row, int d_col) {
    if (d_row == 0 && d_col == 0)
        return ProbeLabel::Stay;
    if (d_col == 0 && d_row == -1)
        return ProbeLabel::North;
    if (d_col == 0 && d_row == 1)
        return ProbeLabel::South;
    if (d_row == 0 && d_col == 1)
        return ProbeLabel::East;
    if (d_row == 0 && d_col == -1)
        return ProbeLabel::West;
    return ProbeLabel::Other;
}

std::size_t ProbeResult::distinct_useful() const {
    std::array<bool, 5> seen{};
    for (auto l : labels)
        if (l != ProbeLabel::Other)
            seen[static_cast<std::size_t>(l)] = true;
    return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

namespace {

OverCookedEnv& as_overcooked(Environment& env) {
    auto* oc = dynamic_cast<OverCookedEnv*>(&env);
    if (!oc)
        throw std::invalid_argument("subpolicy probe needs an OverCooked environment (got " + env.name() + ")");
    return *oc;
}

// Runs one probe rollout per (upper action, repeat) with `act(obs, upper, t)`.
template <typename Act>
ProbeResult probe_with(Act&& act, std::size_t upper_count, std::size_t period, OverCookedEnv& env,
                       std::size_t repeats) {
    if (repeats == 0)
        throw std::invalid_argument("subpolicy probe needs at least one rollout per action");
    ProbeResult result;
    result.counts.assign(upper_count, {});
    for (std::size_t k = 0; k < upper_count; ++k) {
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            Observation obs = env.reset();
            const int r0 = env.state().row, c0 = env.state().col;
            for (std::size_t t = 0; t < period && !env.state().done; ++t) {
                env.step(act(obs, k, t));
                obs = env.observe();
            }
            const auto label = displacement_label(env.state().row - r0, env.state().col - c0);
            ++result.counts[k][static_cast<std::size_t>(label)];
        }
        ProbeLabel label = ProbeLabel::Other;
        for (std::size_t c = 0; c < 6; ++c)
            if (2 * result.counts[k][c] > repeats)
                label = static_cast<ProbeLabel>(c);
        result.labels.push_back(label);
    }
    return result;
}

}  // namespace

ProbeResult subpolicy_probe(const SubpolicyFn& policy, std::size_t upper_count, std::size_t period,
                            Environment& env, std::size_t repeats) {
    auto& oc = as_overcooked(env);
    return probe_with(policy, upper_count, period, oc, repeats);
}

ProbeResult subpolicy_probe(const Hierarchy& h, Environment& env, std::size_t level, std::size_t repeats) {
    auto& oc = as_overcooked(env);
    if (level == 0 || level >= h.level_count())
        throw std::invalid_argument("subpolicy probe level must name a level above 0 in the hierarchy");
    const std::size_t period = h.level(level).spec.period;
    // Actions of the levels between the probed one and level 0, re-chosen at their own periods.
    std::vector<std::size_t> chosen(level + 1, 0);
    auto act = [&](const Observation& obs, std::size_t k, std::size_t t) {
        chosen[level] = k;
        for (std::size_t l = level; l-- > 0;)
            if (t % h.level(l).spec.period == 0)
                chosen[l] = h.policy_greedy(l, obs.data, chosen[l + 1]);
        return chosen[0];
    };
    return probe_with(act, h.level(level).spec.action_count, period, oc, repeats);
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, const char* what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError(std::string("malformed ") + what + " '" + std::string(s) + "'");
    return v;
}

std::uint64_t parse_u64(std::string_view s, const char* what) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError(std::string("malformed ") + what + " '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split3(std::string_view line) {
    const auto a = line.find(',');
    const auto b = a == std::string_view::npos ? a : line.find(',', a + 1);
    if (b == std::string_view::npos || line.find(',', b + 1) != std::string_view::npos)
        throw FormatError("expected three comma-separated fields in '" + std::string(line) + "'");
    return {line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)};
}

}  // namespace

void write_metric(std::ostream& out, const MetricRecord& rec) {
    if (rec.key.empty() || rec.key.find_first_of(",\n") != std::string::npos)
        throw std::invalid_argument("metric key must be non-empty without commas or newlines");
    out << rec.step << ',' << rec.key << ',' << format_double(rec.value) << '\n';
}

std::vector<MetricRecord> read_metrics(std::istream& in) {
    std::vector<MetricRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (in.eof())
            break;  // no trailing newline: a record still being written
        if (line.empty())
            continue;
        const auto f = split3(line);
        out.push_back({parse_u64(f[0], "metric step"), std::string(f[1]), parse_double(f[2], "metric value")});
    }
    return out;
}

EpisodeLog episode_log_from_metrics(const std::vector<MetricRecord>& records) {
    EpisodeLog log;
    std::uint64_t i = 0;
    for (const auto& r : records)
        if (r.key == "episode_reward")
            log.push({i++, r.value, 0, r.step});
    return log;
}

void write_series_csv(std::ostream& out, const std::vector<SeriesPoint>& points) {
    out << "step,value,seed\n";
    for (const auto& p : points)
        out << p.step << ',' << format_double(p.value) << ',' << p.seed << '\n';
}

std::vector<SeriesPoint> read_series_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "step,value,seed")
        throw FormatError("series CSV must start with the header 'step,value,seed'");
    std::vector<SeriesPoint> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto f = split3(line);
        out.push_back({parse_u64(f[0], "step"), parse_double(f[1], "value"), parse_u64(f[2], "seed")});
    }
    return out;
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string render_svg(const std::string& title, const std::vector<SeriesPoint>& points, double smoothing) {
    constexpr double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;

    std::map<std::uint64_t, std::vector<SeriesPoint>> by_seed;
    for (const auto& p : points)
        if (std::isfinite(p.value))
            by_seed[p.seed].push_back(p);

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool any = false;
    for (const auto& [seed, pts] : by_seed)
        for (const auto& p : pts) {
            const double x = static_cast<double>(p.step);
            if (!any) {
                x0 = x1 = x;
                y0 = y1 = p.value;
                any = true;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, p.value);
            y1 = std::max(y1, p.value);
        }
    if (x1 <= x0)
        x1 = x0 + 1;
    if (y1 <= y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
      << W << ' ' << H << "\">\n";
    o << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape_xml(title) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        o << "<text x=\"" << fmt2(sx(fx)) << "\" y=\"" << top + ph + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt2(fx) << "</text>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << fmt2(sy(fy) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt2(fy) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">step</text>\n";

    std::size_t colour = 0;
    for (const auto& [seed, pts] : by_seed) {
        const char* c = kPalette[colour++ % std::size(kPalette)];
        std::string raw, smooth;
        double ema = pts.front().value;
        for (const auto& p : pts) {
            ema = smoothing * ema + (1.0 - smoothing) * p.value;
            const std::string x = fmt2(sx(static_cast<double>(p.step)));
            raw += x + "," + fmt2(sy(p.value)) + " ";
            smooth += x + "," + fmt2(sy(ema)) + " ";
        }
        raw.pop_back();
        smooth.pop_back();
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-opacity=\"0.3\" stroke-width=\"1\" points=\""
          << raw << "\"><title>seed " << seed << "</title></polyline>\n";
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"" << smooth
          << "\"><title>seed " << seed << " (smoothed)</title></polyline>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string metric_file_stem(const std::string& key) {
    std::string s = key;
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
            c = '_';
    return s;
}

std::vector<std::string> emit_report(const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir))
        throw std::runtime_error("run directory '" + run_dir.string() + "' does not exist");

    std::vector<std::pair<std::uint64_t, fs::path>> seeds;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_directory() || name.rfind("seed_", 0) != 0)
            continue;
        seeds.emplace_back(parse_u64(std::string_view(name).substr(5), "seed directory"), entry.path());
    }
    std::sort(seeds.begin(), seeds.end());

    std::map<std::string, std::vector<SeriesPoint>> series{{"episode_reward", {}}};
    for (const auto& [seed, dir] : seeds) {
        const fs::path stream = dir / "metrics.txt";
        if (!fs::exists(stream))
            continue;
        std::ifstream in(stream);
        if (!in)
            throw std::runtime_error("cannot read metrics stream " + stream.string());
        for (const auto& r : read_metrics(in))
            series[r.key].push_back({r.step, r.value, seed});
    }

    const fs::path out_dir = run_dir / "report";
    fs::create_directories(out_dir);
    std::vector<std::string> keys;
    for (const auto& [key, points] : series) {
        std::ostringstream csv;
        write_series_csv(csv, points);
        const std::string stem = metric_file_stem(key);
        std::ofstream(out_dir / (stem + ".csv"), std::ios::binary) << csv.str();
        // The chart is drawn from the CSV text so re-rendering a CSV reproduces it.
        std::istringstream back(csv.str());
        std::ofstream(out_dir / (stem + ".svg"), std::ios::binary) << render_svg(key, read_series_csv(back));
        keys.push_back(key);
    }
    return keys;
}

}  // namespace dehrl
