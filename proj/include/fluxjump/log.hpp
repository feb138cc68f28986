#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace fluxjump {

enum class LogLevel { debug, info, warn };

// Process-wide log sink. Tests swap it out to capture messages.
class Log {
public:
    using Sink = std::function<void(LogLevel, const std::string&)>;

    static void set_sink(Sink sink) {
        std::lock_guard lock(mutex());
        sink_() = std::move(sink);
    }

    static void reset() { set_sink(default_sink()); }

    static void write(LogLevel level, const std::string& msg) {
        std::lock_guard lock(mutex());
        if (sink_()) sink_()(level, msg);
    }

    static void info(const std::string& msg) { write(LogLevel::info, msg); }
    static void warn(const std::string& msg) { write(LogLevel::warn, msg); }
    static void debug(const std::string& msg) { write(LogLevel::debug, msg); }

private:
    static Sink default_sink() {
        return [](LogLevel level, const std::string& msg) {
            if (level == LogLevel::debug) return;
            std::cerr << (level == LogLevel::warn ? "[warn] " : "[info] ") << msg << '\n';
        };
    }
    static std::mutex& mutex() {
        static std::mutex m;
        return m;
    }
    static Sink& sink_() {
        static Sink s = default_sink();
        return s;
    }
};

}  // namespace fluxjump
