#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "dac/common.hpp"

namespace dac {

enum class ScheduleMode { SdacTheory, SdacEmpirical, Tdac, Dldac };

// Double-loop structure parameters (critic inner loop + batched actor).
struct DldacLoop {
  int T_c = 50;        // critic inner-loop length
  int T_c_comm = 10;   // critic consensus rounds per outer iteration
  int T_r = 5;         // reward-gossip rounds per outer iteration
  int batch_actor = 100;
  int batch_critic = 10;
};

// Fully resolved per-iteration step sizes. Single-timescale modes keep
// beta_k/alpha_k and eta_k/alpha_k constant over k; the two-timescale mode
// decays the actor faster than critic and estimator.
class StepSchedule {
 public:
  struct Overrides {
    std::optional<double> alpha_base, beta_base, eta_base;
    std::optional<double> alpha_exp, beta_exp, eta_exp;
    std::optional<DldacLoop> loop;
  };

  static StepSchedule make(ScheduleMode mode, long K, const Overrides& ov = {}) {
    StepSchedule s;
    s.mode_ = mode;
    switch (mode) {
      case ScheduleMode::SdacTheory: {
        // constant alpha_k = alpha_base / sqrt(K), couplings beta = 10 alpha,
        // eta = 10 alpha
        if (K < 1) throw ConfigError("schedule: sdac-theory needs K >= 1");
        double ab = ov.alpha_base.value_or(1.0);
        s.alpha_base_ = ab / std::sqrt(double(K));
        s.beta_base_ = ov.beta_base.value_or(10.0 * s.alpha_base_);
        s.eta_base_ = ov.eta_base.value_or(10.0 * s.alpha_base_);
        s.alpha_exp_ = s.beta_exp_ = s.eta_exp_ = 0.0;
        break;
      }
      case ScheduleMode::SdacEmpirical:
        s.alpha_base_ = ov.alpha_base.value_or(0.01);
        s.beta_base_ = ov.beta_base.value_or(0.1);
        s.eta_base_ = ov.eta_base.value_or(0.1);
        s.alpha_exp_ = ov.alpha_exp.value_or(0.5);
        s.beta_exp_ = ov.beta_exp.value_or(0.5);
        s.eta_exp_ = ov.eta_exp.value_or(0.5);
        break;
      case ScheduleMode::Tdac:
        s.alpha_base_ = ov.alpha_base.value_or(0.01);
        s.beta_base_ = ov.beta_base.value_or(0.1);
        s.eta_base_ = ov.eta_base.value_or(0.1);
        s.alpha_exp_ = ov.alpha_exp.value_or(0.6);
        s.beta_exp_ = ov.beta_exp.value_or(0.4);
        s.eta_exp_ = ov.eta_exp.value_or(0.4);
        break;
      case ScheduleMode::Dldac:
        s.alpha_base_ = ov.alpha_base.value_or(0.01);
        s.beta_base_ = ov.beta_base.value_or(0.1);
        s.eta_base_ = 0.0;
        s.alpha_exp_ = s.beta_exp_ = s.eta_exp_ = 0.0;
        s.loop_ = ov.loop.value_or(DldacLoop{});
        break;
    }
    s.validate();
    return s;
  }

  double alpha(long k) const { return alpha_base_ * std::pow(double(k + 1), -alpha_exp_); }
  double beta(long k) const { return beta_base_ * std::pow(double(k + 1), -beta_exp_); }
  double eta(long k) const { return eta_base_ * std::pow(double(k + 1), -eta_exp_); }

  ScheduleMode mode() const { return mode_; }
  bool single_timescale() const { return mode_ != ScheduleMode::Tdac; }
  const DldacLoop& loop() const { return loop_; }

  // Zero every step size (used by consensus-only diagnostics).
  static StepSchedule frozen() {
    StepSchedule s;
    s.mode_ = ScheduleMode::SdacEmpirical;
    s.alpha_base_ = s.beta_base_ = s.eta_base_ = 0.0;
    return s;
  }

  StepSchedule with_zero_alpha() const {
    StepSchedule s = *this;
    s.alpha_base_ = 0.0;
    return s;
  }

 private:
  void validate() const {
    if (alpha_base_ < 0.0 || beta_base_ < 0.0 || eta_base_ < 0.0)
      throw ConfigError("schedule: negative base step size");
    if (mode_ == ScheduleMode::Tdac) {
      if (!(alpha_exp_ > beta_exp_))
        throw ConfigError("schedule: two-timescale mode requires the actor exponent "
                          "to exceed the critic exponent");
    } else {
      if (alpha_exp_ != beta_exp_ || alpha_exp_ != eta_exp_)
        throw ConfigError("schedule: single-timescale mode requires equal decay "
                          "exponents for actor, critic, and estimator");
    }
  }

  ScheduleMode mode_ = ScheduleMode::SdacEmpirical;
  double alpha_base_ = 0.0, beta_base_ = 0.0, eta_base_ = 0.0;
  double alpha_exp_ = 0.5, beta_exp_ = 0.5, eta_exp_ = 0.5;
  DldacLoop loop_;
};

inline ScheduleMode parse_schedule_mode(const std::string& s) {
  if (s == "sdac-theory") return ScheduleMode::SdacTheory;
  if (s == "sdac-empirical") return ScheduleMode::SdacEmpirical;
  if (s == "tdac") return ScheduleMode::Tdac;
  if (s == "dldac") return ScheduleMode::Dldac;
  throw ConfigError("schedule: unknown mode '" + s + "'");
}

}  // namespace dac
