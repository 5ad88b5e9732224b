#pragma once

#include "behavsim/mdp.hpp"

namespace behavsim {

/// Three states s0, s1, s2 (terminal) and two actions:
///   s0 --a0 (r)--> s1,  s0 --a1 (0)--> s2,
///   s1 --a0 (0)--> s2,  s1 --a1 (r)--> s2.
/// The optimal agent collects r twice: a0 at s0, then a1 at s1.
TabularMdp cake_mdp(double r, double gamma);

}  // namespace behavsim
