// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Built-in scenario presets.

#pragma once

#include "aoidmpc/cosim.hpp"

namespace aoidmpc {

// The three-vehicle platoon study: cyclic two-link channel, setpoint change
// at step 20, forced outage on the rear link around step 59.
ScenarioConfig platoon_scenario();

// A deviation-free two-vehicle variant: parked lead with a zero movement
// budget, single-state always-delivering channel, no coupled corridor.  In
// this regime the follower's optimal value must decrease by at least the
// realized stage cost every step.
ScenarioConfig nominal_scenario();

}  // namespace aoidmpc
