#pragma once
// Process-wide warning channel. Warnings go to stderr unless a sink is
// installed (tests install one to observe them).

#include <functional>
#include <string>

namespace gresynth {

using LogSink = std::function<void(const std::string&)>;

void warn(const std::string& message);
void info(const std::string& message);
/// Replaces the sink for both levels; pass nullptr to restore stderr.
void set_log_sink(LogSink sink);
/// Suppresses info() output (warnings are always delivered).
void set_quiet(bool quiet);

}  // namespace gresynth
