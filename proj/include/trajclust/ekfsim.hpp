#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajclust/common.hpp"
#include "trajclust/dynamics.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

/// How the process-noise diagonal is turned into the covariance added on
/// each prediction step.
enum class ProcessNoise {
  kPerSecond,  // R_step = R * dt_predict (R is a noise density)
  kPerStep,    // R_step = R
};

struct EkfConfig {
  std::array<double, 4> r_diag{0.01, 0.01, 0.005, 0.01};
  std::array<double, 4> q_diag{0.05, 0.05, 0.01, 0.1};
  double dt_predict = 0.010;
  double update_period = 0.080;
  double k_gain = 2.5;
  double p_floor = 1e-15;
  double phi_max = 0.61;
  double v_floor = 0.1;
  ProcessNoise process_noise = ProcessNoise::kPerSecond;

  SteeringLimits limits() const { return {phi_max, v_floor}; }

  /// Prediction steps between two updates.
  int steps_per_update() const {
    return static_cast<int>(std::llround(update_period / dt_predict));
  }

  Eigen::Matrix4d r_step() const {
    const double scale = process_noise == ProcessNoise::kPerSecond ? dt_predict : 1.0;
    return Eigen::Vector4d(r_diag[0], r_diag[1], r_diag[2], r_diag[3]).asDiagonal() * scale;
  }

  Eigen::Matrix4d q() const {
    return Eigen::Vector4d(q_diag[0], q_diag[1], q_diag[2], q_diag[3]).asDiagonal();
  }

  void validate() const {
    for (double r : r_diag)
      if (!(r > 0.0)) throw ConfigError("process noise entries must be positive");
    for (double q : q_diag)
      if (!(q > 0.0)) throw ConfigError("measurement noise entries must be positive");
    if (!(dt_predict > 0.0) || !(update_period > 0.0))
      throw ConfigError("time steps must be positive");
    const auto is_multiple = [](double big, double small) {
      const double ratio = big / small;
      return std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0;
    };
    if (!is_multiple(update_period, dt_predict) || !is_multiple(update_period, kFrameStep))
      throw ConfigError("update period must be a multiple of the prediction step and of 0.04 s");
    if (!(p_floor >= 0.0 && p_floor < 1.0)) throw ConfigError("p_floor must lie in [0, 1)");
    if (!(phi_max > 0.0) || !(v_floor > 0.0)) throw ConfigError("phi_max and v_floor must be positive");
    if (!(k_gain > 0.0)) throw ConfigError("controller gain must be positive");
  }

  friend bool operator==(const EkfConfig&, const EkfConfig&) = default;
};

struct BeliefState {
  State mu;
  Eigen::Matrix4d sigma = Eigen::Matrix4d::Zero();
};

/// Membership of one sample to one centroid over the update instants.
struct MembershipSeries {
  std::vector<double> times;
  std::vector<double> d2;
  std::vector<double> probs;
  double nll = 0.0;
  std::size_t n_updates = 0;
  bool numerical_failure = false;
};

/// Per-update record for plotting a comparison.
struct TraceRow {
  double t;
  double d2;
  double prob;
  State mu;  // predicted belief before the update
  State z;   // centroid observation
};

/// Upper-tail probability of the chi-squared law with 4 degrees of freedom.
inline double chi2_4_survival(double d2) {
  if (!(d2 > 0.0)) return 1.0;
  if (std::isinf(d2)) return 0.0;
  const double h = 0.5 * d2;
  return std::exp(-h) * (1.0 + h);
}

inline Eigen::Vector4d state_residual(const State& z, const State& mu) {
  Eigen::Vector4d r = z.vec() - mu.vec();
  r(2) = wrap_angle(r(2));
  return r;
}

/// Condition number above which a matrix is treated as singular.
inline constexpr double kMaxCondition = 1e12;

namespace detail {

inline double condition_number(const Eigen::Matrix4d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues().cwiseAbs();
  if (ev.minCoeff() <= 0.0) return kInf;
  return ev.maxCoeff() / ev.minCoeff();
}

inline Eigen::Matrix4d clip_psd(const Eigen::Matrix4d& m) {
  Eigen::Matrix4d sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(sym);
  if (es.eigenvalues().minCoeff() >= 0.0) return sym;
  const Eigen::Vector4d clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Squared Mahalanobis distance of an observation from the belief.
/// Returns +inf when the covariance is singular.
inline double mahalanobis2(const BeliefState& b, const State& z) {
  if (detail::condition_number(b.sigma) > kMaxCondition) return kInf;
  const Eigen::Vector4d r = state_residual(z, b.mu);
  const double d2 = r.dot(b.sigma.ldlt().solve(r));
  return std::max(0.0, d2);
}

inline BeliefState ekf_predict(const BeliefState& b, const Control& u, double wheelbase,
                               const EkfConfig& cfg) {
  const Eigen::Matrix4d g = jacobian_state(b.mu, u, wheelbase, cfg.dt_predict);
  BeliefState out;
  out.mu = step(b.mu, u, wheelbase, cfg.dt_predict);
  out.sigma = g * b.sigma * g.transpose() + cfg.r_step();
  return out;
}

/// Full-state EKF correction (H = I). Returns nullopt when the innovation
/// covariance is numerically singular.
inline std::optional<BeliefState> ekf_update(const BeliefState& b, const State& z,
                                             const EkfConfig& cfg) {
  const Eigen::Matrix4d s = b.sigma + cfg.q();
  if (detail::condition_number(s) > kMaxCondition) return std::nullopt;
  // K = Sigma * S^-1, computed as (S^-1 * Sigma)^T since both are symmetric.
  const Eigen::Matrix4d k = s.ldlt().solve(b.sigma).transpose();
  const Eigen::Vector4d mu = b.mu.vec() + k * state_residual(z, b.mu);
  BeliefState out;
  out.mu = {mu(0), mu(1), wrap_angle(mu(2)), std::max(0.0, mu(3))};
  const Eigen::Matrix4d sigma = (Eigen::Matrix4d::Identity() - k) * b.sigma;
  out.sigma = detail::clip_psd(sigma);
  return out;
}

/// Centroid state at time t; heading interpolated along the shorter arc.
inline State observation_at(const Trajectory& centroid, double t) {
  return State::from(centroid.at(centroid.t_first() + t));
}

/// Number of updates that fit in the common time prefix of two trajectories.
inline std::size_t update_count(double overlap, const EkfConfig& cfg) {
  return static_cast<std::size_t>(std::floor(overlap / cfg.update_period + 1e-9));
}

/// Runs the EKF with the sample supplying controls and the centroid
/// supplying observations; records membership at every update instant.
inline MembershipSeries compare(const Trajectory& sample, const Trajectory& centroid,
                                const EkfConfig& cfg, std::vector<TraceRow>* trace = nullptr) {
  const double overlap = std::min(sample.duration(), centroid.duration());
  if (overlap < cfg.update_period - 1e-12)
    throw std::invalid_argument("trajectories overlap for less than one update period");
  const std::size_t n_updates = update_count(overlap, cfg);
  const int per_update = cfg.steps_per_update();

  MembershipSeries out;
  out.n_updates = n_updates;
  out.times.reserve(n_updates);
  out.d2.reserve(n_updates);
  out.probs.reserve(n_updates);

  BeliefState belief{observation_at(centroid, 0.0), cfg.q()};
  SampleController controller(sample, cfg.k_gain, cfg.limits());
  const double t0 = sample.t_first();
  bool failed = false;
  long step_index = 0;
  for (std::size_t u = 0; u < n_updates; ++u) {
    for (int k = 0; k < per_update; ++k, ++step_index) {
      const double t = static_cast<double>(step_index) * cfg.dt_predict;
      if (!failed) {
        const Control ctl = controller.control_at(belief.mu, std::min(t0 + t, sample.t_last()));
        belief = ekf_predict(belief, ctl, sample.wheelbase, cfg);
      }
    }
    const double t = std::min(static_cast<double>(step_index) * cfg.dt_predict, overlap);
    const State z = observation_at(centroid, t);
    double d2 = kInf;
    if (!failed) {
      d2 = mahalanobis2(belief, z);
      if (!std::isfinite(d2)) failed = true;
    }
    const double p = failed ? 0.0 : chi2_4_survival(d2);
    out.times.push_back(t);
    out.d2.push_back(d2);
    out.probs.push_back(p);
    if (trace) trace->push_back({t, d2, p, belief.mu, z});
    if (!failed) {
      auto next = ekf_update(belief, z, cfg);
      if (next) {
        belief = *next;
      } else {
        failed = true;
      }
    }
  }

  out.numerical_failure = failed;
  double nll = 0.0;
  for (double p : out.probs) {
    if (p <= cfg.p_floor) {
      nll = kInf;
      break;
    }
    nll -= std::log(p);
  }
  out.nll = failed ? kInf : nll;
  return out;
}

/// Membership trace as CSV (t, d2, prob, predicted belief, observation).
inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "t,d2,prob,mu_x,mu_y,mu_theta,mu_v,z_x,z_y,z_theta,z_v\n";
  for (const auto& r : rows) {
    out += format_double(r.t) + ',' + format_double(r.d2) + ',' + format_double(r.prob);
    for (const State* s : {&r.mu, &r.z})
      out += ',' + format_double(s->x) + ',' + format_double(s->y) + ',' +
             format_double(s->theta) + ',' + format_double(s->v);
    out += '\n';
  }
  return out;
}

}  // namespace trajclust
