#pragma once

#include "twoscale/model.hpp"

#include <string>
#include <vector>

namespace twoscale {

struct PresetBundle {
  ModelSpec model;
  Vec x0;
  Vec q0;
};

// Built-in instances: "reaction_diffusion" (controlled reaction-diffusion
// pair on (0,1) with Dirichlet sine modes), "linear_toy" (single mode each,
// closed-form ergodic value) and "degenerate_R0" (no slow noise).
// n_modes and m_shift override the reaction-diffusion truncation dimension
// and the fast spectral shift; zero keeps the defaults (8 modes, m = 2).
PresetBundle load_preset(const std::string& name, int n_modes = 0, double m_shift = 0.0);
std::vector<std::string> preset_names();

}  // namespace twoscale
