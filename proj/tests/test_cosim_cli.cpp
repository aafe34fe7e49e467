// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

TEST_CASE("placeholder") { CHECK(true); }
