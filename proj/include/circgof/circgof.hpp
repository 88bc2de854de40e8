#pragma once

#include "circgof/adaptive.hpp"
#include "circgof/errors.hpp"
#include "circgof/lower_bound.hpp"
#include "circgof/montecarlo.hpp"
#include "circgof/spectral.hpp"
#include "circgof/test_engine.hpp"
