// Draws a free field on Q(4), Wick-orders it and evaluates both interactions.
#include <cstdio>

#include "sqfield/sqfield.hpp"

int main() {
  using namespace sqfield;
  const auto cutoff = CutoffSet::square(4);
  GffSampler gff(cutoff, 2024, 0);
  const FieldCoeffs z = gff.sample();
  const double r = rho(*cutoff);
  std::printf("Q(4): %zu modes, rho^2 = %.6f\n", cutoff->size(), r * r);

  const int n_g = 32;
  for (int n = 1; n <= 3; ++n) {
    const auto w = wick_power(z, n, cutoff, n_g);
    std::printf("Phi_%d at the origin: %+.6f (second moment n! rho^2n = %.6f)\n", n, w.grid(0, 0),
                std::tgamma(n + 1.0) * std::pow(r, 2 * n));
  }

  for (auto kind : {ModelKind::Exp, ModelKind::Cos}) {
    ModelSpec m;
    m.kind = kind;
    m.a = 1.0;
    m.cutoff = cutoff;
    const Potential v(m);
    const auto ev = v.evaluate(z);
    std::printf("%s model: V = %.6f, |grad V| = %.6f, grid %d\n", to_string(kind).c_str(), ev.value,
                std::sqrt(inner(ev.grad, ev.grad)), v.grid());
  }
}
