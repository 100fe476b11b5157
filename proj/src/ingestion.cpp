#include "smahyper/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "smahyper/errors.hpp"
#include "smahyper/timeutil.hpp"

namespace smahyper {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CsvRow {
    std::size_t line;
    std::vector<std::string> fields;
};

struct CsvFile {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

CsvFile read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    CsvFile f;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto fields = split_csv(line);
        if (!have_header) {
            f.header = std::move(fields);
            have_header = true;
        } else {
            f.rows.push_back({lineno, std::move(fields)});
        }
    }
    if (!have_header) throw DataError(path.string() + ": missing header row");
    return f;
}

std::string where(const fs::path& path, std::size_t line) {
    return path.filename().string() + ":" + std::to_string(line);
}

void expect_header(const CsvFile& f, const std::vector<std::string>& want, const fs::path& path) {
    if (f.header != want) {
        std::string w;
        for (std::size_t i = 0; i < want.size(); ++i) w += (i ? "," : "") + want[i];
        throw DataError(where(path, 1) + ": expected header '" + w + "'");
    }
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc{} && res.ptr == e && std::isfinite(out);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void standardize(FeatureBlock& block) {
    const std::size_t n = block.raw.dim(0), d = block.raw.dim(1);
    block.standardized = Tensor({n, d});
    block.mean.assign(d, 0.0);
    block.stddev.assign(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += block.raw[i * d + c];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (block.raw[i * d + c] - mu) * (block.raw[i * d + c] - mu);
        var /= static_cast<double>(n);
        block.mean[c] = mu;
        if (var < kVarianceFloor) continue;  // column stays all-zero
        const double sd = std::sqrt(var);
        block.stddev[c] = sd;
        for (std::size_t i = 0; i < n; ++i) block.standardized[i * d + c] = (block.raw[i * d + c] - mu) / sd;
    }
}

}  // namespace

RegionCatalog make_catalog(std::vector<std::string> region_ids) {
    RegionCatalog c;
    for (std::size_t i = 0; i < region_ids.size(); ++i) {
        if (!c.index_of.emplace(region_ids[i], i).second) {
            throw DataError("duplicate region id '" + region_ids[i] + "'");
        }
    }
    c.region_ids = std::move(region_ids);
    c.adjacency = Tensor({c.region_ids.size(), c.region_ids.size()});
    return c;
}

RegionCatalog load_regions(const fs::path& path) {
    const auto f = read_csv(path);
    expect_header(f, {"region_id"}, path);
    std::vector<std::string> ids;
    for (const auto& r : f.rows) {
        if (r.fields.size() != 1 || r.fields[0].empty()) {
            throw DataError(where(path, r.line) + ": expected a single region id");
        }
        ids.push_back(r.fields[0]);
    }
    try {
        return make_catalog(std::move(ids));
    } catch (const DataError& e) {
        throw DataError(path.filename().string() + ": " + e.what());
    }
}

AccidentLoad load_accidents(const fs::path& path, const RegionCatalog& catalog, const TimeAxis& axis) {
    const auto f = read_csv(path);
    expect_header(f, {"region_id", "timestamp", "severity"}, path);
    AccidentLoad out;
    std::set<std::string> unknown_seen;
    for (const auto& r : f.rows) {
        if (r.fields.size() != 3) {
            throw DataError(where(path, r.line) + ": expected 3 fields, got " +
                            std::to_string(r.fields.size()));
        }
        const auto ts = parse_timestamp(r.fields[1]);
        if (!ts) throw DataError(where(path, r.line) + ": malformed timestamp '" + r.fields[1] + "'");
        int sev = 0;
        const std::string s = lower(r.fields[2]);
        if (s == "1" || s == "slight") {
            sev = 1;
        } else if (s == "2" || s == "serious") {
            sev = 2;
        } else if (s == "3" || s == "fatal") {
            sev = 3;
        } else {
            throw DataError(where(path, r.line) + ": invalid severity '" + r.fields[2] + "'");
        }
        auto it = catalog.index_of.find(r.fields[0]);
        if (it == catalog.index_of.end()) {
            if (unknown_seen.insert(r.fields[0]).second) out.unknown_regions.push_back(r.fields[0]);
            out.rejected.push_back({r.line, "unknown region '" + r.fields[0] + "'"});
            continue;
        }
        if (*ts < axis.origin) {
            out.rejected.push_back({r.line, "timestamp before time origin"});
            continue;
        }
        const auto idx = static_cast<std::size_t>((*ts - axis.origin) / axis.interval_seconds());
        if (idx >= axis.n_steps) {
            out.rejected.push_back({r.line, "timestamp past the end of the time axis"});
            continue;
        }
        out.events.push_back({it->second, idx, sev});
    }
    return out;
}

AdjacencyLoad load_adjacency(const fs::path& path, const RegionCatalog& catalog) {
    const auto f = read_csv(path);
    expect_header(f, {"region_a", "region_b"}, path);
    AdjacencyLoad out{catalog, {}};
    const std::size_t n = catalog.size();
    out.catalog.adjacency = Tensor({n, n});
    for (const auto& r : f.rows) {
        if (r.fields.size() != 2) {
            throw DataError(where(path, r.line) + ": expected 2 fields, got " +
                            std::to_string(r.fields.size()));
        }
        auto a = catalog.index_of.find(r.fields[0]);
        auto b = catalog.index_of.find(r.fields[1]);
        if (a == catalog.index_of.end() || b == catalog.index_of.end()) {
            const std::string& bad = a == catalog.index_of.end() ? r.fields[0] : r.fields[1];
            throw DataError(where(path, r.line) + ": edge endpoint '" + bad + "' is not a known region");
        }
        if (a->second == b->second) {
            out.warnings.push_back({r.line, "self-loop on '" + r.fields[0] + "' ignored"});
            continue;
        }
        out.catalog.adjacency[a->second * n + b->second] = 1.0;
        out.catalog.adjacency[b->second * n + a->second] = 1.0;
    }
    return out;
}

FeatureBlock load_feature_block(const fs::path& path, const RegionCatalog& catalog) {
    const auto f = read_csv(path);
    if (f.header.empty() || f.header[0] != "region_id") {
        throw DataError(where(path, 1) + ": first column must be 'region_id'");
    }
    FeatureBlock block;
    block.columns.assign(f.header.begin() + 1, f.header.end());
    const std::size_t n = catalog.size(), d = block.columns.size();
    block.raw = Tensor({n, d});
    std::vector<bool> present(n, false);
    for (const auto& r : f.rows) {
        if (r.fields.size() != d + 1) {
            throw DataError(where(path, r.line) + ": expected " + std::to_string(d + 1) +
                            " fields, got " + std::to_string(r.fields.size()));
        }
        auto it = catalog.index_of.find(r.fields[0]);
        if (it == catalog.index_of.end()) {
            throw DataError(where(path, r.line) + ": unknown region '" + r.fields[0] + "'");
        }
        if (present[it->second]) {
            throw DataError(where(path, r.line) + ": duplicate row for region '" + r.fields[0] + "'");
        }
        present[it->second] = true;
        for (std::size_t c = 0; c < d; ++c) {
            double v;
            if (!parse_double(r.fields[c + 1], v)) {
                throw DataError(where(path, r.line) + ", column '" + block.columns[c] +
                                "': non-numeric value '" + r.fields[c + 1] + "'");
            }
            block.raw[it->second * d + c] = v;
        }
    }
    const auto n_present = static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
    if (n_present == 0 && n > 0) throw DataError(path.filename().string() + ": no region rows");
    for (std::size_t c = 0; c < d; ++c) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (present[i]) mu += block.raw[i * d + c];
        mu /= static_cast<double>(n_present);
        for (std::size_t i = 0; i < n; ++i)
            if (!present[i]) block.raw[i * d + c] = mu;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!present[i]) block.imputed_regions.push_back(catalog.region_ids[i]);
    standardize(block);
    return block;
}

UrbanFeatures load_urban_features(const fs::path& poi_path, const fs::path& road_path,
                                  const RegionCatalog& catalog) {
    return {load_feature_block(poi_path, catalog), load_feature_block(road_path, catalog)};
}

std::size_t calendar_width(int interval_hours) { return interval_hours == 12 ? 10 : 9; }

ExternalLoad build_external_features(const fs::path& weather_path, const fs::path& holiday_path,
                                     const RegionCatalog& catalog, const TimeAxis& axis) {
    const std::size_t n = catalog.size(), t_total = axis.n_steps;
    const auto wf = read_csv(weather_path);
    if (wf.header.empty() || wf.header[0] != "timestamp") {
        throw DataError(where(weather_path, 1) + ": first column must be 'timestamp'");
    }
    const std::size_t dm = wf.header.size() - 1;
    ExternalLoad out;
    out.features.meteorology_names.assign(wf.header.begin() + 1, wf.header.end());

    // Hour buckets relative to the origin; several records in one hour are averaged.
    std::map<std::int64_t, std::pair<std::vector<double>, int>> hourly;
    for (const auto& r : wf.rows) {
        if (r.fields.size() != dm + 1) {
            throw DataError(where(weather_path, r.line) + ": expected " + std::to_string(dm + 1) +
                            " fields, got " + std::to_string(r.fields.size()));
        }
        const auto ts = parse_timestamp(r.fields[0]);
        if (!ts) throw DataError(where(weather_path, r.line) + ": malformed timestamp '" + r.fields[0] + "'");
        auto& slot = hourly[floor_div(*ts - axis.origin, 3600)];
        if (slot.first.empty()) slot.first.assign(dm, 0.0);
        for (std::size_t c = 0; c < dm; ++c) {
            double v;
            if (!parse_double(r.fields[c + 1], v)) {
                throw DataError(where(weather_path, r.line) + ", column '" +
                                out.features.meteorology_names[c] + "': non-numeric value '" +
                                r.fields[c + 1] + "'");
            }
            slot.first[c] += v;
        }
        ++slot.second;
    }
    if (hourly.empty() && t_total > 0) throw DataError(weather_path.filename().string() + ": no weather records");

    const std::int64_t hours_per_bin = axis.interval_hours;
    const std::int64_t total_hours = static_cast<std::int64_t>(t_total) * hours_per_bin;
    if (t_total > 0) {
        const std::int64_t first = hourly.begin()->first, last = hourly.rbegin()->first;
        std::vector<std::string> gaps;
        // Bins lying wholly before the first or after the last observation.
        const std::int64_t lead_bins = std::max<std::int64_t>(0, floor_div(first, hours_per_bin));
        if (lead_bins > 0) {
            gaps.push_back(format_timestamp(axis.step_start(0)) + " .. " +
                           format_timestamp(axis.step_start(static_cast<std::size_t>(std::min<std::int64_t>(lead_bins, static_cast<std::int64_t>(t_total))))));
        }
        const std::int64_t covered_end_bin = floor_div(last, hours_per_bin) + 1;
        if (covered_end_bin < static_cast<std::int64_t>(t_total)) {
            gaps.push_back(format_timestamp(axis.step_start(static_cast<std::size_t>(std::max<std::int64_t>(0, covered_end_bin)))) +
                           " .. " + format_timestamp(axis.step_start(t_total)));
        }
        if (!gaps.empty()) {
            std::string msg = "weather does not cover the accident time axis; uncovered:";
            for (const auto& g : gaps) msg += " [" + g + ")";
            throw DataError(msg);
        }
    }

    // Hourly series over the axis, forward-filled; leading gaps back-filled.
    std::vector<std::vector<double>> series(static_cast<std::size_t>(total_hours));
    std::vector<double> carry;
    for (auto it = hourly.begin(); it != hourly.end() && it->first < 0; ++it) {
        carry = it->second.first;
        for (auto& v : carry) v /= it->second.second;
    }
    std::int64_t first_known = -1;
    for (std::int64_t h = 0; h < total_hours; ++h) {
        auto it = hourly.find(h);
        if (it != hourly.end()) {
            carry = it->second.first;
            for (auto& v : carry) v /= it->second.second;
        } else {
            ++out.filled_hours;
        }
        if (!carry.empty() && first_known < 0) first_known = h;
        series[static_cast<std::size_t>(h)] = carry;
    }
    for (std::int64_t h = 0; h < first_known; ++h) series[static_cast<std::size_t>(h)] = series[static_cast<std::size_t>(first_known)];

    // Bin mean as anchor + mean deviation, so a constant bin reproduces its
    // value exactly (keeps write/reload round trips bitwise).
    out.meteorology_bins = Tensor({t_total, dm});
    for (std::size_t t = 0; t < t_total; ++t) {
        const std::size_t h0 = t * static_cast<std::size_t>(hours_per_bin);
        for (std::size_t c = 0; c < dm; ++c) {
            const double anchor = series[h0][c];
            double dev = 0.0;
            for (std::int64_t h = 0; h < hours_per_bin; ++h)
                dev += series[h0 + static_cast<std::size_t>(h)][c] - anchor;
            out.meteorology_bins[t * dm + c] = anchor + dev / static_cast<double>(hours_per_bin);
        }
    }

    out.met_mean.assign(dm, 0.0);
    out.met_std.assign(dm, 0.0);
    Tensor met_std_bins({t_total, dm});
    for (std::size_t c = 0; c < dm; ++c) {
        double mu = 0.0, var = 0.0;
        for (std::size_t t = 0; t < t_total; ++t) mu += out.meteorology_bins[t * dm + c];
        mu /= static_cast<double>(std::max<std::size_t>(1, t_total));
        for (std::size_t t = 0; t < t_total; ++t) {
            const double z = out.meteorology_bins[t * dm + c] - mu;
            var += z * z;
        }
        var /= static_cast<double>(std::max<std::size_t>(1, t_total));
        out.met_mean[c] = mu;
        if (var < kVarianceFloor) continue;
        out.met_std[c] = std::sqrt(var);
        for (std::size_t t = 0; t < t_total; ++t)
            met_std_bins[t * dm + c] = (out.meteorology_bins[t * dm + c] - mu) / out.met_std[c];
    }

    const auto hf = read_csv(holiday_path);
    expect_header(hf, {"date"}, holiday_path);
    std::set<std::int64_t> holidays;
    for (const auto& r : hf.rows) {
        if (r.fields.size() != 1) throw DataError(where(holiday_path, r.line) + ": expected a single date");
        const auto ts = parse_timestamp(r.fields[0]);
        if (!ts || r.fields[0].size() != 10) {
            throw DataError(where(holiday_path, r.line) + ": malformed date '" + r.fields[0] + "'");
        }
        holidays.insert(floor_div(*ts, 86400));
    }
    out.holiday_days.assign(holidays.begin(), holidays.end());

    const std::size_t dc = calendar_width(axis.interval_hours);
    out.features.calendar_names = {"mon", "tue", "wed", "thu", "fri", "sat", "sun", "holiday", "weekend"};
    if (dc == 10) out.features.calendar_names.push_back("afternoon");
    Tensor cal_rows({t_total, dc});
    for (std::size_t t = 0; t < t_total; ++t) {
        const std::int64_t start = axis.step_start(t);
        const int dow = weekday_monday0(start);
        cal_rows[t * dc + static_cast<std::size_t>(dow)] = 1.0;
        cal_rows[t * dc + 7] = holidays.count(floor_div(start, 86400)) ? 1.0 : 0.0;
        cal_rows[t * dc + 8] = dow >= 5 ? 1.0 : 0.0;
        if (dc == 10) {
            const std::int64_t hour = (start - floor_div(start, 86400) * 86400) / 3600;
            cal_rows[t * dc + 9] = hour >= 12 ? 1.0 : 0.0;
        }
    }

    out.features.meteorology = Tensor({n, t_total, dm});
    out.features.calendar = Tensor({n, t_total, dc});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(met_std_bins.vec().begin(), met_std_bins.vec().end(),
                  out.features.meteorology.vec().begin() + static_cast<std::ptrdiff_t>(i * t_total * dm));
        std::copy(cal_rows.vec().begin(), cal_rows.vec().end(),
                  out.features.calendar.vec().begin() + static_cast<std::ptrdiff_t>(i * t_total * dc));
    }
    return out;
}

std::string Manifest::get(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) throw DataError("manifest is missing key '" + key + "'");
    return it->second;
}

fs::path Manifest::path(const std::string& key) const {
    fs::path p = get(key);
    return p.is_absolute() ? p : base_dir / p;
}

Manifest parse_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError(where(path, lineno) + ": expected 'key = value'");
        m.entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"regions", "accidents", "adjacency", "poi", "road", "weather", "holidays",
                            "time_origin", "interval_hours", "n_regions", "n_steps"}) {
        m.get(key);
    }
    return m;
}

Dataset load_dataset(const fs::path& manifest_path) {
    const Manifest m = parse_manifest(manifest_path);
    Dataset d;
    const auto origin = parse_timestamp(m.get("time_origin"));
    if (!origin) throw DataError("manifest: malformed time_origin '" + m.get("time_origin") + "'");
    d.axis.origin = *origin;
    try {
        d.axis.interval_hours = std::stoi(m.get("interval_hours"));
        d.axis.n_steps = static_cast<std::size_t>(std::stoul(m.get("n_steps")));
    } catch (const std::logic_error&) {
        throw DataError("manifest: interval_hours and n_steps must be integers");
    }
    if (d.axis.interval_hours <= 0) throw DataError("manifest: interval_hours must be positive");

    d.catalog = load_regions(m.path("regions"));
    const std::string n_regions = m.get("n_regions");
    if (n_regions != std::to_string(d.catalog.size())) {
        throw DataError("manifest declares n_regions = " + n_regions + " but regions file lists " +
                        std::to_string(d.catalog.size()));
    }
    auto adj = load_adjacency(m.path("adjacency"), d.catalog);
    d.catalog = std::move(adj.catalog);
    d.adjacency_warnings = std::move(adj.warnings);
    d.accidents = load_accidents(m.path("accidents"), d.catalog, d.axis);
    d.risk = compute_risk_scores(d.accidents.events, d.catalog.size(), d.axis.n_steps, d.axis.interval_hours);
    d.urban = load_urban_features(m.path("poi"), m.path("road"), d.catalog);
    d.externals = build_external_features(m.path("weather"), m.path("holidays"), d.catalog, d.axis);
    return d;
}

namespace {

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

void write_features(const fs::path& p, const std::vector<std::string>& ids, const Tensor& m,
                    const std::vector<std::string>& cols) {
    auto out = open_out(p);
    out << "region_id";
    for (const auto& c : cols) out << ',' << c;
    out << '\n';
    const std::size_t d = cols.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out << ids[i];
        for (std::size_t c = 0; c < d; ++c) out << ',' << fmt(m[i * d + c]);
        out << '\n';
    }
}

void write_common(const fs::path& dir, const std::vector<std::string>& ids,
                  const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    {
        auto out = open_out(dir / "regions.csv");
        out << "region_id\n";
        for (const auto& id : ids) out << id << '\n';
    }
    auto out = open_out(dir / "adjacency.csv");
    out << "region_a,region_b\n";
    for (const auto& [a, b] : edges) out << ids[a] << ',' << ids[b] << '\n';
}

void write_manifest(const fs::path& dir, std::size_t n, std::size_t steps, int interval,
                    const std::string& origin) {
    auto out = open_out(dir / "dataset.manifest");
    out << "# dataset manifest\n"
        << "regions = regions.csv\n"
        << "accidents = accidents.csv\n"
        << "adjacency = adjacency.csv\n"
        << "poi = poi.csv\n"
        << "road = road.csv\n"
        << "weather = weather.csv\n"
        << "holidays = holidays.csv\n"
        << "time_origin = " << origin << '\n'
        << "interval_hours = " << interval << '\n'
        << "n_regions = " << n << '\n'
        << "n_steps = " << steps << '\n';
}

}  // namespace

void write_dataset(const Dataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& ids = data.catalog.region_ids;
    const std::size_t n = ids.size();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (data.catalog.adjacency[i * n + j] != 0.0) edges.emplace_back(i, j);
    write_common(dir, ids, edges);
    {
        static const char* names[] = {"", "slight", "serious", "fatal"};
        auto out = open_out(dir / "accidents.csv");
        out << "region_id,timestamp,severity\n";
        for (const auto& e : data.accidents.events)
            out << ids[e.region_index] << ',' << format_timestamp(data.axis.step_start(e.time_index))
                << ',' << names[e.severity] << '\n';
    }
    write_features(dir / "poi.csv", ids, data.urban.poi.raw, data.urban.poi.columns);
    write_features(dir / "road.csv", ids, data.urban.road.raw, data.urban.road.columns);
    {
        auto out = open_out(dir / "weather.csv");
        const auto& names = data.externals.features.meteorology_names;
        out << "timestamp";
        for (const auto& c : names) out << ',' << c;
        out << '\n';
        const std::size_t dm = names.size();
        for (std::size_t t = 0; t < data.axis.n_steps; ++t) {
            out << format_timestamp(data.axis.step_start(t));
            for (std::size_t c = 0; c < dm; ++c) out << ',' << fmt(data.externals.meteorology_bins[t * dm + c]);
            out << '\n';
        }
    }
    {
        auto out = open_out(dir / "holidays.csv");
        out << "date\n";
        for (auto day : data.externals.holiday_days) out << format_date(day * 86400) << '\n';
    }
    write_manifest(dir, n, data.axis.n_steps, data.axis.interval_hours, format_timestamp(data.axis.origin));
}

void write_synthetic_city(const SyntheticCity& city, const fs::path& dir) {
    fs::create_directories(dir);
    const auto origin = parse_timestamp(city.time_origin);
    if (!origin) throw DataError("bad synthetic time origin");
    const std::int64_t interval = std::int64_t{city.interval_hours} * 3600;
    write_common(dir, city.region_ids, city.edges);
    {
        auto out = open_out(dir / "accidents.csv");
        out << "region_id,timestamp,severity\n";
        for (std::size_t i = 0; i < city.events.size(); ++i) {
            const auto& e = city.events[i];
            const std::int64_t ts = *origin + static_cast<std::int64_t>(e.time_index) * interval +
                                    std::int64_t{city.event_hour_offsets[i]} * 3600;
            out << city.region_ids[e.region_index] << ',' << format_timestamp(ts) << ',' << e.severity << '\n';
        }
    }
    write_features(dir / "poi.csv", city.region_ids, city.poi, city.poi_names);
    write_features(dir / "road.csv", city.region_ids, city.road, city.road_names);
    {
        auto out = open_out(dir / "weather.csv");
        out << "timestamp";
        for (const auto& c : city.weather_names) out << ',' << c;
        out << '\n';
        for (const auto& w : city.weather) {
            out << format_timestamp(*origin + w.hour * 3600);
            for (double v : w.values) out << ',' << fmt(v);
            out << '\n';
        }
    }
    {
        auto out = open_out(dir / "holidays.csv");
        out << "date\n";
        for (auto d : city.holiday_days) out << format_date(*origin + d * 86400) << '\n';
    }
    {
        auto out = open_out(dir / "synthetic_meta.csv");
        out << "key,value\n"
            << "grid_side," << city.grid_side << '\n'
            << "padding_cells," << city.padding_cells << '\n'
            << "hotspots,";
        for (std::size_t i = 0; i < city.hotspots.size(); ++i)
            out << (i ? ";" : "") << city.region_ids[city.hotspots[i]];
        out << '\n';
    }
    write_manifest(dir, city.region_ids.size(), city.n_steps, city.interval_hours, city.time_origin);
}

}  // namespace smahyper
