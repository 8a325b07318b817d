#pragma once

// Numerical thresholds shared by every module. Values are part of the public
// contract: tests and the acceptance suite assert against them.
namespace filippov::tol {

inline constexpr double kUnitInput = 1e-9;        // |p| = 1 check on user input
inline constexpr double kUnitConstructed = 1e-12; // |n| = 1, circle membership of constructed points
inline constexpr double kZeroVector = 1e-12;      // project_to_sphere rejects shorter vectors
inline constexpr double kOnSigma = 1e-12;         // region_of refuses points this close to a circle
inline constexpr double kOffCircle = 1e-9;        // Lie derivative / classification domain
inline constexpr double kSkew = 1e-12;            // A + A^T entrywise

inline constexpr double kTangency = 1e-10;        // |X.gamma| below this is a tangency
inline constexpr double kContactOrder = 1e-8;     // first Lie derivative above this fixes the order
inline constexpr int kMaxContactOrder = 4;
inline constexpr double kDegenerateDenominator = 1e-12;
inline constexpr double kRootMerge = 1e-8;        // angle radius for merging tangency roots
inline constexpr double kRootBisection = 1e-10;   // angle accuracy of tangency roots
inline constexpr int kTangencySamples = 1440;     // >= 720 required
inline constexpr double kPseudoEquilibrium = 1e-10;
inline constexpr double kRealEquilibrium = 1e-10;

inline constexpr double kFiniteDifferenceStep = 1e-6;

inline constexpr double kRelTol = 1e-10;          // adaptive Runge-Kutta
inline constexpr double kAbsTol = 1e-12;
inline constexpr double kMinStep = 1e-14;
inline constexpr double kEventTime = 1e-12;       // event localization accuracy in time
inline constexpr double kEventIgnoreStart = 1e-10;// events this close to arc start are ignored
inline constexpr double kGraze = 1e-9;            // |gamma| at an extremum counted as a touch
inline constexpr double kTangencySnap = 1e-6;     // distance for snapping hits onto known tangencies

} // namespace filippov::tol
