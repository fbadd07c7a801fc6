#pragma once

#include <stdexcept>
#include <string>

namespace fedspd {

struct invalid_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Random generation exhausted its retry budget (e.g. ER connectivity).
struct generation_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite parameters produced during training.
struct divergence_error : std::runtime_error {
    divergence_error(const std::string& msg, long step, int client = -1)
        : std::runtime_error(msg), step(step), client(client) {}
    long step;
    int client;
};

struct protocol_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fedspd
