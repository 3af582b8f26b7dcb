#pragma once

#include "twinbeam/commands.hpp"
#include "twinbeam/config.hpp"
#include "twinbeam/diag.hpp"
#include "twinbeam/error.hpp"
#include "twinbeam/estimators.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/glyph.hpp"
#include "twinbeam/lm.hpp"
#include "twinbeam/model_fit.hpp"
#include "twinbeam/numeric.hpp"
#include "twinbeam/parallel.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/rng.hpp"
#include "twinbeam/sim.hpp"
#include "twinbeam/theory.hpp"
