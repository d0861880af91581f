#pragma once

#include <string_view>

namespace famed::log {

enum class Level { Debug, Info, Warn, Error, Off };

/// Messages below this level are dropped. Defaults to Info; FAMED_LOG
/// (debug|info|warn|error|off) overrides it at startup.
void set_level(Level level);
Level level();

void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void error(std::string_view m) { write(Level::Error, m); }

}  // namespace famed::log
