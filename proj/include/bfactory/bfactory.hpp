// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "bfactory/analysis.hpp"
#include "bfactory/errors.hpp"
#include "bfactory/expression.hpp"
#include "bfactory/factory.hpp"
#include "bfactory/harness.hpp"
#include "bfactory/lazy_table.hpp"
#include "bfactory/nonrand.hpp"
#include "bfactory/numeric.hpp"
#include "bfactory/report_io.hpp"
#include "bfactory/selftest.hpp"
#include "bfactory/series.hpp"
#include "bfactory/sources.hpp"
#include "bfactory/stats.hpp"
