#pragma once

// Umbrella header: the whole library in one include.

#include "copid/config_json.hpp"
#include "copid/control.hpp"
#include "copid/core.hpp"
#include "copid/data.hpp"
#include "copid/forecast.hpp"
#include "copid/run.hpp"
#include "copid/scores.hpp"
