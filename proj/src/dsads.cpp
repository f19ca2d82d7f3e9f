#include "xsadapt/dsads.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "xsadapt/errors.hpp"

namespace xsa {

namespace fs = std::filesystem;

namespace {

constexpr double kDsadsRateHz = 25.0;
constexpr std::size_t kDsadsColumns = 45;

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void append_segment(const fs::path& file, int label, SensorRecording& rec) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        std::size_t col = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end && col < kDsadsColumns) {
            double v = 0.0;
            while (p < end && *p == ' ') ++p;
            const auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc{}) throw DataError(file.string() + ":" + std::to_string(row) + ": bad number");
            rec.channels[col++].push_back(v);
            p = next;
            if (p < end && *p == ',') ++p;
        }
        if (col != kDsadsColumns)
            throw DataError(file.string() + ":" + std::to_string(row) + ": expected 45 columns");
        rec.timestamps_ms.push_back(1000.0 * static_cast<double>(rec.labels.size()) / kDsadsRateHz);
        rec.labels.push_back(label);
    }
}

/// Column order of the acc_gyro layout: acc xyz of units 1..5, then gyro xyz.
std::vector<std::size_t> acc_gyro_columns() {
    std::vector<std::size_t> cols;
    for (std::size_t sensor : {0U, 3U})
        for (std::size_t unit = 0; unit < 5; ++unit)
            for (std::size_t axis = 0; axis < 3; ++axis) cols.push_back(unit * 9 + sensor + axis);
    return cols;
}

void apply_layout(SensorRecording& rec, DsadsLayout layout) {
    if (layout == DsadsLayout::all) return;
    std::vector<std::vector<double>> picked;
    std::vector<std::string> names;
    for (std::size_t c : acc_gyro_columns()) {
        picked.push_back(std::move(rec.channels[c]));
        names.push_back("ch_" + std::to_string(names.size()));
    }
    rec.channels = std::move(picked);
    rec.channel_names = std::move(names);
}

}  // namespace

const std::vector<std::string>& dsads_default_activities() {
    static const std::vector<std::string> kActivities{"a01", "a02", "a03", "a04", "a05", "a06",
                                                      "a09", "a11", "a12", "a13", "a14", "a18"};
    return kActivities;
}

std::vector<SensorRecording> load_dsads(const fs::path& root, const std::vector<std::string>& activities,
                                        double target_rate_hz, DsadsLayout layout) {
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    if (activities.empty()) throw ConfigError("no DSADS activities selected");
    std::map<std::string, SensorRecording> subjects;
    for (std::size_t k = 0; k < activities.size(); ++k) {
        const fs::path adir = root / activities[k];
        if (!fs::is_directory(adir)) throw DataError("missing activity folder " + adir.string());
        for (const auto& pdir : sorted_entries(adir, true)) {
            const std::string id = pdir.filename().string();
            auto [it, fresh] = subjects.try_emplace(id);
            SensorRecording& rec = it->second;
            if (fresh) {
                rec.subject_id = id;
                rec.sample_rate_hz = kDsadsRateHz;
                rec.num_classes = static_cast<int>(activities.size());
                rec.channels.assign(kDsadsColumns, {});
                for (std::size_t c = 0; c < kDsadsColumns; ++c) rec.channel_names.push_back("ch_" + std::to_string(c));
            }
            for (const auto& seg : sorted_entries(pdir, false))
                if (seg.extension() == ".txt") append_segment(seg, static_cast<int>(k), rec);
        }
    }
    std::vector<SensorRecording> out;
    for (auto& [id, rec] : subjects) {
        apply_layout(rec, layout);
        rec.validate();
        out.push_back(target_rate_hz > 0.0 ? resample(rec, target_rate_hz) : std::move(rec));
    }
    return out;
}

}  // namespace xsa
