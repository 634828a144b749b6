#pragma once

#include "constants.hpp"
#include "control.hpp"
#include "dynamics.hpp"
#include "electrostatics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "layout.hpp"
#include "parallel.hpp"
#include "qubit.hpp"
#include "rng.hpp"
#include "sites.hpp"
#include "stats.hpp"
#include "trap.hpp"
#include "waveform.hpp"
