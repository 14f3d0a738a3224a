#pragma once

#include <stdexcept>
#include <string>

namespace wmprior {

// Base class so callers can distinguish library failures from std ones.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : error {
    using error::error;
};

// Input files, CSV/JSON schemas, unresolvable names.
struct data_error : error {
    using error::error;
};

// Model text that could not be mapped to a verdict or JSON payload.
struct parse_error : error {
    using error::error;
};

// Transient backend failures worth retrying.
struct retryable_error : error {
    using error::error;
};

struct transport_error : retryable_error {
    using retryable_error::retryable_error;
};

struct rate_limit_error : retryable_error {
    using retryable_error::retryable_error;
};

// Request digest absent from the replay store in strict replay mode.
struct replay_miss_error : error {
    using error::error;
};

struct store_corruption_error : error {
    using error::error;
};

struct degenerate_fit_error : error {
    using error::error;
};

}  // namespace wmprior
