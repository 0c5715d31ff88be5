#pragma once

#include "dlinf/commands.hpp"
#include "dlinf/common.hpp"
#include "dlinf/config.hpp"
#include "dlinf/dictionary.hpp"
#include "dlinf/encoder.hpp"
#include "dlinf/hashing.hpp"
#include "dlinf/io.hpp"
#include "dlinf/neurons.hpp"
#include "dlinf/solver.hpp"
#include "dlinf/synth.hpp"
#include "dlinf/training.hpp"
