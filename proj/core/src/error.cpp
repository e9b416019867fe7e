#include "mixedquant/error.hpp"

namespace mixedquant {

const char* to_string(IoErrorKind kind) noexcept {
  switch (kind) {
    case IoErrorKind::kIo: return "i/o error";
    case IoErrorKind::kBadMagic: return "bad magic";
    case IoErrorKind::kBadVersion: return "unsupported version";
    case IoErrorKind::kMalformed: return "malformed file";
    case IoErrorKind::kMissingBlob: return "missing blob";
    case IoErrorKind::kBlobSizeMismatch: return "blob size mismatch";
    case IoErrorKind::kChecksumMismatch: return "checksum mismatch";
    case IoErrorKind::kShapeMismatch: return "shape mismatch";
    case IoErrorKind::kUnknownLayerKind: return "unknown layer kind";
  }
  return "unknown";
}

IoError::IoError(IoErrorKind kind, const std::string& what)
    : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

}  // namespace mixedquant
