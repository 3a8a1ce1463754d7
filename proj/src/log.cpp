#include "jacprobe/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace jacprobe::log {

namespace {

Level from_env() {
    const char* v = std::getenv("JF_LOG");
    if (!v) return Level::off;
    const std::string s(v);
    if (s == "debug") return Level::debug;
    if (s == "info") return Level::info;
    return Level::off;
}

std::atomic<int>& current() {
    static std::atomic<int> l{static_cast<int>(from_env())};
    return l;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

Level level() { return static_cast<Level>(current().load(std::memory_order_relaxed)); }

void set_level(Level l) { current().store(static_cast<int>(l), std::memory_order_relaxed); }

void write(Level l, std::string_view message) {
    if (!enabled(l)) return;
    std::lock_guard lock(sink_mutex());
    std::clog << (l == Level::debug ? "[debug] " : "[info] ") << message << '\n';
}

} // namespace jacprobe::log
