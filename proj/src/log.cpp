#include "biaslens/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace biaslens::log {

namespace {

Level parse_env() {
    const char* raw = std::getenv("BIASLENS_LOG");
    if (!raw) return Level::info;
    const std::string value(raw);
    if (value == "error") return Level::error;
    if (value == "debug") return Level::debug;
    return Level::info;
}

const char* tag(Level level) {
    switch (level) {
        case Level::error: return "error";
        case Level::debug: return "debug";
        default: return "info";
    }
}

std::mutex io_mutex;

}  // namespace

Level threshold() {
    static const Level level = parse_env();
    return level;
}

void write(Level level, const std::string& message) {
    std::lock_guard<std::mutex> lock(io_mutex);
    std::ostream& out = (level == Level::error) ? std::cerr : std::clog;
    out << "[" << tag(level) << "] " << message << "\n";
}

}  // namespace biaslens::log
