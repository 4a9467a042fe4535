#pragma once

#include <string>

namespace dshift::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

void set_level(Level level);
Level level();

// Writes "[timestamp] message" to stderr when the level allows it.
void info(const std::string& message);
void debug(const std::string& message);

}  // namespace dshift::log
