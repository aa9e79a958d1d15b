#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fewshot {

/// Contract or validation failure. The CLI maps these to exit status 1.
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string component, const std::string& message)
        : std::runtime_error(component + ": " + message),
          component_(std::move(component)) {}

    const std::string& component() const { return component_; }

private:
    std::string component_;
};

/// Filesystem or format failure on an external resource. Exit status 2.
class IoError : public std::runtime_error {
public:
    IoError(std::string component, const std::string& message)
        : std::runtime_error(component + ": " + message),
          component_(std::move(component)) {}

    const std::string& component() const { return component_; }

private:
    std::string component_;
};

[[noreturn]] inline void fail(const std::string& component,
                              const std::string& message) {
    throw ValidationError(component, message);
}

[[noreturn]] inline void fail_io(const std::string& component,
                                 const std::string& message) {
    throw IoError(component, message);
}

}  // namespace fewshot
