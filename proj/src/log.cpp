#include "xsadapt/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace xsa {

namespace {

LogLevel level_from_env() {
    const char* env = std::getenv("XSADAPT_LOG");
    if (!env) return LogLevel::warn;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "error") return LogLevel::error;
    if (v == "off") return LogLevel::off;
    return LogLevel::warn;
}

std::atomic<int>& level_storage() {
    static std::atomic<int> level{static_cast<int>(level_from_env())};
    return level;
}

const char* tag(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
        default: return "";
    }
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_message(LogLevel level, std::string_view msg) {
    if (level < log_level()) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[xsadapt " << tag(level) << "] " << msg << '\n';
}

}  // namespace xsa
