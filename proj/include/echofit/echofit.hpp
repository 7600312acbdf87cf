#pragma once

// Umbrella header.

#include "echofit/units.hpp"
#include "echofit/error.hpp"
#include "echofit/random.hpp"
#include "echofit/catalog.hpp"
#include "echofit/models.hpp"
#include "echofit/presets.hpp"
#include "echofit/fit.hpp"
#include "echofit/guess.hpp"
#include "echofit/data.hpp"
#include "echofit/synth.hpp"
#include "echofit/pipeline.hpp"
#include "echofit/demo.hpp"
