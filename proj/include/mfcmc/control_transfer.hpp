#pragma once

#include "mfcmc/controls.hpp"
#include "mfcmc/dynamics.hpp"

namespace mfcmc {

// Moves alpha from its start to time s along its own motion: every item
// (w, y, xi) becomes (w, x(s), xi restricted to [s, T]). s must be a sample
// time of flow in [start, T).
ControlDistribution transfer(const ControlDistribution& alpha, double s, const MFCFlow& flow);

// transfer to s, then restrict every control to [s, r].
ControlDistribution restrict_distribution(const ControlDistribution& alpha, double s, double r, const MFCFlow& flow);

// alpha0 on [s0, s1] followed by alpha1 on [s1, s2]. Each alpha0 item is
// paired with the alpha1 items whose initial state equals its endpoint (read
// from flow, the motion of alpha0) within 1e-9, weighted by their conditional
// weights. Throws CouplingError when alpha1's base cloud is not the time-s1
// cloud of flow.
ControlDistribution concat_distributions(const ControlDistribution& alpha0, const ControlDistribution& alpha1,
                                         double s1, const MFCFlow& flow);

}  // namespace mfcmc
