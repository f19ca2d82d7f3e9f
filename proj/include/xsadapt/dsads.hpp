#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xsadapt/dataset.hpp"

namespace xsa {

/// DSADS activity folders (a01..a19) used as classes, in label order:
/// sitting, standing, lying on back, lying on right side, ascending stairs,
/// descending stairs, walking (parking lot), ascending ramp (inclined
/// treadmill), running, stepper, cross trainer, jumping.
const std::vector<std::string>& dsads_default_activities();

/// `all` keeps the 45 raw columns (5 units x acc/gyro/mag xyz). `acc_gyro`
/// drops the magnetometers and groups the 15 accelerometer axes before the
/// 15 gyroscope axes, so a two-stream net sees one sensor type per stream.
enum class DsadsLayout { all, acc_gyro };

/// Reads `<root>/aNN/pM/sKK.txt` (125 rows x 45 comma-separated columns at
/// 25 Hz). Segments are concatenated per subject in activity then segment
/// order and resampled to `target_rate_hz` (no resampling when <= 0).
std::vector<SensorRecording> load_dsads(const std::filesystem::path& root,
                                        const std::vector<std::string>& activities = dsads_default_activities(),
                                        double target_rate_hz = 100.0, DsadsLayout layout = DsadsLayout::acc_gyro);

}  // namespace xsa
