#pragma once

#include <stdexcept>
#include <string>

namespace advsteg {

// Error taxonomy shared by all modules. Everything derives from Error so the
// CLI can map any failure to a single diagnostic line.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };
struct UnsupportedError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct BoundsError : Error { using Error::Error; };
struct PayloadError : Error { using Error::Error; };
struct SizeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct InternalError : Error { using Error::Error; };

}  // namespace advsteg
