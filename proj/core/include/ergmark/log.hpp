#pragma once

#include <functional>
#include <string>

namespace ergmark {

using WarningSink = std::function<void(const std::string&)>;

// Default sink writes "warning: <msg>" to stderr. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace ergmark
