#pragma once

#include "ergmark/error.hpp"
#include "ergmark/log.hpp"

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <vector>
#include <unistd.h>

namespace test {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ergmark-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Runs fn and checks that it throws ergmark::Error of `kind` whose message
// contains `needle`.
template <typename Fn>
void check_error(ergmark::ErrorKind kind, const std::string& needle, Fn&& fn) {
    try {
        fn();
        FAIL("expected an error containing '" << needle << "'");
    } catch (const ergmark::Error& e) {
        CHECK_MESSAGE(e.kind() == kind, "kind " << ergmark::to_string(e.kind()) << ": " << e.what());
        CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos,
                      "message '" << e.what() << "' lacks '" << needle << "'");
    }
}

// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        previous_ = ergmark::set_warning_sink([this](const std::string& m) {
            std::lock_guard lock(mutex_);
            messages_.push_back(m);
        });
    }
    ~WarningCapture() { ergmark::set_warning_sink(previous_); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    std::vector<std::string> messages() const {
        std::lock_guard lock(mutex_);
        return messages_;
    }
    bool contains(const std::string& needle) const {
        for (const auto& m : messages()) {
            if (m.find(needle) != std::string::npos) return true;
        }
        return false;
    }

private:
    ergmark::WarningSink previous_;
    mutable std::mutex mutex_;
    std::vector<std::string> messages_;
};

}  // namespace test
