// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lb2/budget.hpp"
#include "lb2/container.hpp"
#include "lb2/core.hpp"
#include "lb2/experiments.hpp"
#include "lb2/factorize.hpp"
#include "lb2/kernel.hpp"
#include "lb2/linalg.hpp"
#include "lb2/metrics.hpp"
#include "lb2/quantize.hpp"
#include "lb2/spectral.hpp"
