#pragma once

// Umbrella header.

#include "pflock/archive.hpp"
#include "pflock/config.hpp"
#include "pflock/coopt.hpp"
#include "pflock/error.hpp"
#include "pflock/flocking.hpp"
#include "pflock/ga.hpp"
#include "pflock/metrics.hpp"
#include "pflock/nn/checkpoint.hpp"
#include "pflock/nn/discriminator.hpp"
#include "pflock/nn/tensor.hpp"
#include "pflock/nn/training.hpp"
#include "pflock/rng.hpp"
#include "pflock/simulation.hpp"
#include "pflock/trajectory.hpp"
#include "pflock/vec3.hpp"
#include "pflock/window.hpp"
