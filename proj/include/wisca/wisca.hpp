// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wisca/attention.hpp"
#include "wisca/checkpoint.hpp"
#include "wisca/equivalence.hpp"
#include "wisca/errors.hpp"
#include "wisca/landscape.hpp"
#include "wisca/layout.hpp"
#include "wisca/matrix.hpp"
#include "wisca/rng.hpp"
#include "wisca/stats.hpp"
#include "wisca/transform.hpp"
