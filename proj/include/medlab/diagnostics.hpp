#pragma once

#include <string>
#include <vector>

namespace medlab {

/// Emits a non-fatal warning. By default warnings go to stderr; inside a
/// WarningCapture scope on the same thread they are collected instead.
void warn(const std::string& message);

/// Collects warnings raised on the current thread for its lifetime.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const noexcept { return messages_; }

private:
    friend void warn(const std::string&);
    std::vector<std::string> messages_;
    WarningCapture* previous_;
};

}  // namespace medlab
