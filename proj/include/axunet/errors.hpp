#pragma once

#include <stdexcept>
#include <string>

namespace axunet {

// Error taxonomy, mapped to process exit codes by the CLI:
//   ConfigError -> 2, DataError -> 3, NumericError/ShapeError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace axunet
