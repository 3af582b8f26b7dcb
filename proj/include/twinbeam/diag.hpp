#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace twinbeam {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {

struct WarningSink {
    std::mutex mutex;
    WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
};

inline WarningSink& warning_sink()
{
    static WarningSink sink;
    return sink;
}

} // namespace detail

/// Replaces the process-wide warning handler and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler)
{
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    return std::exchange(sink.handler, std::move(handler));
}

inline void warn(const std::string& msg)
{
    auto& sink = detail::warning_sink();
    std::lock_guard lock(sink.mutex);
    if (sink.handler)
        sink.handler(msg);
}

/// Installs a handler for the lifetime of the guard (tests use it to capture warnings).
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler handler) : previous_(set_warning_handler(std::move(handler))) {}
    ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler previous_;
};

} // namespace twinbeam
