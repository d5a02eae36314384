#include "iqp/error.hpp"

namespace iqp {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidKappa: return "InvalidKappa";
    case ErrorCode::NonFiniteStep: return "NonFiniteStep";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::MaxIter: return "MaxIter";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace iqp
