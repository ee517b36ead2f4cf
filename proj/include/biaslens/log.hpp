#pragma once

#include <sstream>
#include <string>

namespace biaslens::log {

enum class Level { error = 0, info = 1, debug = 2 };

// Threshold comes from the BIASLENS_LOG env var (error|info|debug), default info.
Level threshold();

void write(Level level, const std::string& message);

template <typename... Args>
void emit(Level level, Args&&... args) {
    if (level > threshold()) return;
    std::ostringstream os;
    (os << ... << args);
    write(level, os.str());
}

template <typename... Args>
void error(Args&&... args) { emit(Level::error, std::forward<Args>(args)...); }

template <typename... Args>
void info(Args&&... args) { emit(Level::info, std::forward<Args>(args)...); }

template <typename... Args>
void debug(Args&&... args) { emit(Level::debug, std::forward<Args>(args)...); }

}  // namespace biaslens::log
