#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gem {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using Index = std::int64_t;

// Base for all recoverable library errors. Subclasses carry the spec'd
// error names so callers can catch them individually.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define GEM_DEFINE_ERROR(name)              \
  struct name : Error {                     \
    using Error::Error;                     \
  }

GEM_DEFINE_ERROR(NonManifold);
GEM_DEFINE_ERROR(InconsistentOrientation);
GEM_DEFINE_ERROR(DegenerateFace);
GEM_DEFINE_ERROR(ZeroNormal);
GEM_DEFINE_ERROR(DisconnectedNeighborhood);
GEM_DEFINE_ERROR(NoInlet);
GEM_DEFINE_ERROR(UnreachableVertex);
GEM_DEFINE_ERROR(DegenerateTangent);
GEM_DEFINE_ERROR(ZeroProjection);
GEM_DEFINE_ERROR(InsufficientSampling);
GEM_DEFINE_ERROR(SignatureMismatch);
GEM_DEFINE_ERROR(Underbanded);
GEM_DEFINE_ERROR(EmptyLevel);
GEM_DEFINE_ERROR(LevelMismatch);
GEM_DEFINE_ERROR(EmptyNeighborhood);
GEM_DEFINE_ERROR(ConfigInvalid);
GEM_DEFINE_ERROR(NonFinite);
GEM_DEFINE_ERROR(ZeroLabel);
GEM_DEFINE_ERROR(SelfIntersection);
GEM_DEFINE_ERROR(RejectionBudgetExceeded);
GEM_DEFINE_ERROR(RadiusUnderflow);
GEM_DEFINE_ERROR(ShapeMismatch);
GEM_DEFINE_ERROR(ToleranceExceeded);
GEM_DEFINE_ERROR(IoError);

#undef GEM_DEFINE_ERROR

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Wraps an angle into [0, 2*pi).
inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

// Signed distance between two angles, in (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > kPi) d -= kTwoPi;
  if (d <= -kPi) d += kTwoPi;
  return d;
}

}  // namespace gem
