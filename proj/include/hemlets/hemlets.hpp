#pragma once

/// \file hemlets.hpp
/// \brief Umbrella header for the library (the command line stays in cli.hpp).

#include "hemlets/adam.hpp"
#include "hemlets/augment.hpp"
#include "hemlets/codec.hpp"
#include "hemlets/config.hpp"
#include "hemlets/error.hpp"
#include "hemlets/gradcheck.hpp"
#include "hemlets/losses.hpp"
#include "hemlets/metrics.hpp"
#include "hemlets/model.hpp"
#include "hemlets/sample.hpp"
#include "hemlets/skeleton.hpp"
#include "hemlets/synth.hpp"
#include "hemlets/tensor.hpp"
#include "hemlets/trainer.hpp"
#include "hemlets/volumetric.hpp"
