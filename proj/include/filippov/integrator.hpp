#pragma once

// Dormand-Prince 5(4) with the standard fourth-order continuous extension.

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "filippov/error.hpp"
#include "filippov/tolerances.hpp"

namespace filippov {

template <int N>
struct DenseStep {
  using State = Eigen::Matrix<double, N, 1>;

  double t0 = 0.0;
  double h = 0.0;
  State y0;
  State y1;
  std::array<State, 5> r;  // continuous extension coefficients

  double t1() const { return t0 + h; }

  State at(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r[0] + s * (r[1] + s1 * (r[2] + s * (r[3] + s1 * r[4])));
  }
};

template <int N>
class DormandPrince {
 public:
  using State = Eigen::Matrix<double, N, 1>;

  struct Attempt {
    State y1;
    double err;  // scaled error norm, accept when <= 1
    DenseStep<N> dense;
  };

  DormandPrince(double rtol = tol::kRelTol, double atol = tol::kAbsTol) : rtol_(rtol), atol_(atol) {}

  template <class F>
  Attempt attempt(const F& f, double t, const State& y, double h) const {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                            d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                            d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

    const State k1 = f(t, y);
    const State k2 = f(t + c2 * h, State(y + h * (a21 * k1)));
    const State k3 = f(t + c3 * h, State(y + h * (a31 * k1 + a32 * k2)));
    const State k4 = f(t + c4 * h, State(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const State k5 = f(t + c5 * h, State(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const State k6 = f(t + h, State(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    const State y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    const State k7 = f(t + h, y1);

    const State e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(y1[i]));
      acc += (e[i] / sc) * (e[i] / sc);
    }
    Attempt out{y1, std::sqrt(acc / static_cast<double>(y.size())), {}};
    out.dense.t0 = t;
    out.dense.h = h;
    out.dense.y0 = y;
    out.dense.y1 = y1;
    out.dense.r[0] = y;
    out.dense.r[1] = y1 - y;
    out.dense.r[2] = h * k1 - out.dense.r[1];
    out.dense.r[3] = out.dense.r[1] - h * k7 - out.dense.r[2];
    out.dense.r[4] = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
    return out;
  }

  /// Next step size after an attempt with scaled error `err`.
  static double next_step(double h, double err) {
    const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    return h * fac;
  }

  /// Drives accepted steps from t0 towards t_end. `on_step(dense)` is called
  /// after each accepted step (the state may be modified through `post` first)
  /// and returns false to stop. Steps never exceed `h_max` so that event
  /// guards sampled at step ends cannot skip a short excursion.
  /// Returns the last time reached.
  template <class F, class Post, class OnStep>
  double drive(const F& f, double t0, State y, double t_end, double h0, const Post& post,
               const OnStep& on_step, double h_max = 0.1) const {
    double t = t0;
    double h = std::min(h0, t_end - t0);
    while (t < t_end) {
      h = std::min({h, h_max, t_end - t});
      if (h < tol::kMinStep && t_end - t > tol::kMinStep) {
        throw Error(ErrorCode::StalledStep, "step size underflow");
      }
      Attempt a = attempt(f, t, y, h);
      if (a.err > 1.0) {
        h = next_step(h, a.err);
        continue;
      }
      post(a.dense);
      const bool last = (t + h >= t_end);
      t = last ? t_end : t + h;
      a.dense.h = t - a.dense.t0;
      y = a.dense.y1;
      if (!on_step(a.dense)) return t;
      if (last) break;
      h = next_step(h, a.err);
    }
    return t;
  }

 private:
  double rtol_;
  double atol_;
};

} // namespace filippov
