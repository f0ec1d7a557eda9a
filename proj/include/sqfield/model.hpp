#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/free_field.hpp"
#include "sqfield/green.hpp"
#include "sqfield/torus.hpp"
#include "sqfield/wick.hpp"

namespace sqfield {

enum class ModelKind { Exp, Cos };

inline std::string to_string(ModelKind k) { return k == ModelKind::Exp ? "exp" : "cos"; }

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "exp") return ModelKind::Exp;
  if (s == "cos") return ModelKind::Cos;
  throw ParameterOutOfRange("unknown model kind '" + s + "' (expected exp or cos)");
}

/// Charge bound for the measure-level statements, sqrt(4 pi).
inline double charge_bound() { return std::sqrt(4.0 * kPi); }

struct ModelSpec {
  ModelKind kind = ModelKind::Exp;
  double a = 1.0;
  double gamma = 1.0;
  double delta = 0.5;
  CutoffPtr cutoff = CutoffSet::square(8);
  int n_g = 0;  // 0: smallest power of two above oversample * max_norm
  int oversample = kDefaultOversample;

  int grid() const { return n_g > 0 ? n_g : grid_above(oversample * cutoff->max_norm()); }

  /// Structural checks; the messages name the violated condition.
  void validate() const {
    if (!cutoff) throw ParameterOutOfRange("model has no cutoff");
    if (!cutoff->contains({0, 0})) throw ParameterOutOfRange("cutoff must contain the zero mode");
    if (!(delta > 0.0))
      throw ParameterOutOfRange("delta must be positive (delta=" + std::to_string(delta) + ")");
    if (!(gamma > 0.0 && gamma <= 1.0))
      throw ParameterOutOfRange("gamma must lie in (0, 1] (gamma=" + std::to_string(gamma) + ")");
    if (!(delta + 2.0 * gamma > 2.0))
      throw ParameterOutOfRange("standing assumption delta + 2*gamma > 2 violated (delta=" +
                                std::to_string(delta) + ", gamma=" + std::to_string(gamma) + ")");
    if (!std::isfinite(a)) throw ParameterOutOfRange("charge a must be finite");
    if (oversample < 1) throw ParameterOutOfRange("oversample factor must be >= 1");
    require_nyquist(grid(), cutoff->max_norm(), "model grid");
  }

  /// Adds |a| < sqrt(4 pi), needed wherever the Gibbs measure itself is used.
  void validate_measure() const {
    validate();
    if (!(std::abs(a) < charge_bound()))
      throw ParameterOutOfRange("charge bound |a| < sqrt(4*pi) violated (a=" + std::to_string(a) +
                                ")");
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (!(std::abs(a) < std::sqrt(4.0 * kPi * gamma)))
      w.push_back("|a| >= sqrt(4*pi*gamma): outside the range covered by the uniqueness result");
    return w;
  }
};

/// V, its gradient b_k = dV/dz_k and the largest grid value of the field.
struct PotentialEval {
  double value = 0.0;
  FieldCoeffs grad;
  double max_field = 0.0;
};

/// V(z) = (exp_Lambda(az), 1) or (cos_Lambda(az), 1), both as trapezoid sums on
/// the model grid. The gradient is the exact derivative of that sum:
/// a (exp_Lambda, e_k)_grid or -a (sin_Lambda, e_k)_grid.
class Potential {
 public:
  explicit Potential(ModelSpec m) : model_(std::move(m)), n_g_(model_.grid()) {
    model_.validate();
    rho_ = rho(*model_.cutoff);
    const double e = 0.5 * model_.a * model_.a * rho_ * rho_;
    detail::check_exponent(e);
    trig_scale_ = std::exp(e);
  }

  const ModelSpec& model() const { return model_; }
  int grid() const { return n_g_; }
  double rho_value() const { return rho_; }

  double value(const FieldCoeffs& z) const { return run(z, false).value; }
  PotentialEval evaluate(const FieldCoeffs& z) const { return run(z, true); }

  /// Grid values of exp_Lambda(az) (Exp) or cos_Lambda(az) (Cos).
  GridField density(const FieldCoeffs& z) const {
    const GridField phi = eval_projected(z, model_.cutoff, n_g_);
    return model_.kind == ModelKind::Exp ? wick_exp_grid(phi, model_.a, rho_)
                                         : wick_trig_grid(phi, model_.a, rho_, false);
  }

 private:
  PotentialEval run(const FieldCoeffs& z, bool with_grad) const {
    PotentialEval out;
    if (with_grad) out.grad = FieldCoeffs(model_.cutoff);
    if (model_.a == 0.0) {
      out.value = kTorusArea;
      return out;
    }
    const GridField phi = eval_projected(z, model_.cutoff, n_g_);
    out.max_field = phi.max_abs();
    const double a = model_.a;
    GridField f(n_g_);
    GridField g(n_g_);  // d/d(phi) of the integrand, divided by a
    if (model_.kind == ModelKind::Exp) {
      f = wick_exp_grid(phi, a, rho_);
      g = f;
    } else {
      for (std::size_t j = 0; j < phi.values.size(); ++j) {
        f.values[j] = trig_scale_ * std::cos(a * phi.values[j]);
        g.values[j] = -trig_scale_ * std::sin(a * phi.values[j]);
      }
    }
    out.value = integrate_grid(f);
    if (with_grad) {
      out.grad = analyze(g, model_.cutoff);
      out.grad *= a;
    }
    return out;
  }

  ModelSpec model_;
  int n_g_;
  double rho_ = 0.0;
  double trig_scale_ = 1.0;
};

/// Relative change of V and b when the grid is doubled, over the given fields.
struct GridBiasReport {
  int n_g = 0;
  double max_rel_value = 0.0;
  double max_rel_grad = 0.0;
};

inline GridBiasReport grid_doubling_bias(const ModelSpec& m, const std::vector<FieldCoeffs>& zs) {
  ModelSpec fine = m;
  fine.n_g = 2 * m.grid();
  const Potential coarse_p(m);
  const Potential fine_p(fine);
  GridBiasReport rep;
  rep.n_g = m.grid();
  for (const auto& z : zs) {
    const auto c = coarse_p.evaluate(z);
    const auto f = fine_p.evaluate(z);
    rep.max_rel_value = std::max(rep.max_rel_value,
                                 std::abs(c.value - f.value) / std::max(1e-300, std::abs(f.value)));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < c.grad.size(); ++i) {
      num += (c.grad[i] - f.grad[i]) * (c.grad[i] - f.grad[i]);
      den += f.grad[i] * f.grad[i];
    }
    if (den > 0.0) rep.max_rel_grad = std::max(rep.max_rel_grad, std::sqrt(num / den));
  }
  return rep;
}

}  // namespace sqfield
