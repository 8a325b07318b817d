#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace filippov {

enum class ErrorCode {
  ZeroVector,
  InvalidAngle,
  InvalidInput,
  OnSwitchingManifold,
  SupportTouchesSigma,
  OrderTooHigh,
  OffCircle,
  DegenerateDenominator,
  NonIsolatedTangency,
  ContactOrderUnresolved,
  StalledStep,
  WrongMode,
  PolicyExhausted,
  NotABranchPoint,
  BudgetOverflow,
  NotSkewSymmetric,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::InvalidAngle: return "InvalidAngle";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::OnSwitchingManifold: return "OnSwitchingManifold";
    case ErrorCode::SupportTouchesSigma: return "SupportTouchesSigma";
    case ErrorCode::OrderTooHigh: return "OrderTooHigh";
    case ErrorCode::OffCircle: return "OffCircle";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::NonIsolatedTangency: return "NonIsolatedTangency";
    case ErrorCode::ContactOrderUnresolved: return "ContactOrderUnresolved";
    case ErrorCode::StalledStep: return "StalledStep";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::PolicyExhausted: return "PolicyExhausted";
    case ErrorCode::NotABranchPoint: return "NotABranchPoint";
    case ErrorCode::BudgetOverflow: return "BudgetOverflow";
    case ErrorCode::NotSkewSymmetric: return "NotSkewSymmetric";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

} // namespace filippov
