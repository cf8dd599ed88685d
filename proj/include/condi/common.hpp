#ifndef CONDI_COMMON_HPP
#define CONDI_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace condi {

// Error categories map onto the CLI exit codes: config -> 2, data -> 3,
// numeric -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

} // namespace condi

#endif
