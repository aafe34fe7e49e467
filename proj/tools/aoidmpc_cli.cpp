// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
int main() { std::puts("aoidmpc: not yet implemented"); return 1; }
