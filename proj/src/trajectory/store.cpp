#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "popmon/trajectory.hpp"

namespace popmon {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw TrajectoryError("malformed number '" + s + "' on line " + std::to_string(line_no));
    }
}

int parse_int(const std::string& s, std::size_t line_no) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw TrajectoryError("malformed integer '" + s + "' on line " + std::to_string(line_no));
    }
    return v;
}

}  // namespace

TrajectoryStore TrajectoryStore::ingest(std::span<const PositioningRecord> rows) {
    TrajectoryStore store;
    for (const PositioningRecord& r : rows) {
        if (r.object.empty()) throw TrajectoryError("record without object id");
        if (!std::isfinite(r.time) || !std::isfinite(r.location.x) || !std::isfinite(r.location.y)) {
            throw TrajectoryError("non-finite record for object " + r.object);
        }
        Trajectory& tr = store.by_object_[r.object];
        tr.object = r.object;
        tr.records.push_back({r.location, r.time});
    }
    for (auto& [object, tr] : store.by_object_) {
        std::stable_sort(tr.records.begin(), tr.records.end(),
                         [](const TimedLocation& a, const TimedLocation& b) { return a.time < b.time; });
        for (std::size_t i = 1; i < tr.records.size(); ++i) {
            if (tr.records[i].time == tr.records[i - 1].time) {
                throw TrajectoryError("duplicate timestamp " + std::to_string(tr.records[i].time) + " for object " +
                                      object);
            }
        }
    }
    return store;
}

std::size_t TrajectoryStore::record_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, tr] : by_object_) n += tr.records.size();
    return n;
}

const Trajectory* TrajectoryStore::find(const std::string& object) const {
    auto it = by_object_.find(object);
    return it == by_object_.end() ? nullptr : &it->second;
}

std::vector<BracketingPair> TrajectoryStore::bracketing_pairs(double t) const {
    std::vector<BracketingPair> pairs;
    for (const auto& [object, tr] : by_object_) {
        const auto& rec = tr.records;
        if (rec.size() < 2) continue;
        auto it = std::upper_bound(rec.begin(), rec.end(), t,
                                   [](double value, const TimedLocation& r) { return value < r.time; });
        std::size_t hi = static_cast<std::size_t>(it - rec.begin());
        if (hi == 0) continue;
        if (hi == rec.size()) {
            if (rec.back().time != t) continue;
            hi = rec.size() - 1;
        }
        const TimedLocation& a = rec[hi - 1];
        const TimedLocation& b = rec[hi];
        pairs.push_back({object, a.location, a.time, b.location, b.time});
    }
    return pairs;
}

std::optional<TimedLocation> TrajectoryStore::last_at_or_before(const std::string& object, double t) const {
    const Trajectory* tr = find(object);
    if (tr == nullptr) return std::nullopt;
    auto it = std::upper_bound(tr->records.begin(), tr->records.end(), t,
                               [](double value, const TimedLocation& r) { return value < r.time; });
    if (it == tr->records.begin()) return std::nullopt;
    return *std::prev(it);
}

std::vector<PositioningRecord> TrajectoryStore::rows() const {
    std::vector<PositioningRecord> out;
    for (const auto& [object, tr] : by_object_) {
        for (const TimedLocation& r : tr.records) out.push_back({object, r.location, r.time});
    }
    return out;
}

std::vector<PositioningRecord> read_trajectory_csv(std::istream& in) {
    std::vector<PositioningRecord> rows;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("object_id", 0) == 0) continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw TrajectoryError("expected 5 fields on line " + std::to_string(line_no));
        PositioningRecord r;
        r.object = f[0];
        if (r.object.empty()) throw TrajectoryError("empty object id on line " + std::to_string(line_no));
        r.location.x = parse_double(f[1], line_no);
        r.location.y = parse_double(f[2], line_no);
        r.location.floor = parse_int(f[3], line_no);
        r.time = parse_double(f[4], line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_trajectory_csv(std::ostream& out, std::span<const PositioningRecord> rows) {
    out << "object_id,x,y,floor,timestamp_s\n";
    char buf[160];
    for (const PositioningRecord& r : rows) {
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d,%.17g\n", r.location.x, r.location.y, r.location.floor, r.time);
        out << r.object << buf;
    }
}

}  // namespace popmon
