// Langevin time averages against importance sampling for the cos model on Q(4).
#include <cstdio>

#include "sqfield/sqfield.hpp"

int main() {
  using namespace sqfield;
  ModelSpec m;
  m.kind = ModelKind::Cos;
  m.a = 1.0;
  m.cutoff = CutoffSet::square(4);

  SimulationOptions so;
  so.T = 200.0;
  so.burn_in = 20.0;
  so.h = 0.02;
  so.thin = 5;
  so.n_replicas = 8;
  so.start = StartKind::FreeField;
  so.seed = 31;
  const ObservablePanel panel;
  const auto sim = simulate(m, so, panel);

  GibbsOptions go;
  go.n_samples = 20000;
  go.seed = 32;
  go.adaptive = true;
  const WeightedEnsemble ens(m, go, false);
  std::vector<double> v(panel.size());
  std::vector<std::vector<double>> cols(panel.size(), std::vector<double>(ens.size()));
  for (std::size_t i = 0; i < ens.size(); ++i) {
    panel.evaluate(ens.samples().z[i], ens.samples().v[i], m.delta, v);
    for (std::size_t j = 0; j < v.size(); ++j) cols[j][i] = v[j];
  }
  std::printf("%-16s %22s %22s %7s\n", "observable", "dynamics", "importance", "z");
  for (std::size_t j = 0; j < panel.size(); ++j) {
    const auto d = sim.estimate(j);
    const auto w = ens.mean(cols[j]);
    std::printf("%-16s %11.5f +- %7.5f %11.5f +- %7.5f %7.2f\n", sim.names[j].c_str(), d.value, d.se, w.value, w.se,
                (d.value - w.value) / std::hypot(d.se, w.se));
  }
  std::printf("ESS %.0f of %zu\n", ens.ess(), ens.size());
}
