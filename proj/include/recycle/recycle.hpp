#pragma once

#include "recycle/calendar.hpp"
#include "recycle/checkpoint.hpp"
#include "recycle/cycle_frame.hpp"
#include "recycle/diagnostics.hpp"
#include "recycle/errors.hpp"
#include "recycle/matrix.hpp"
#include "recycle/model.hpp"
#include "recycle/optim.hpp"
#include "recycle/pipeline.hpp"
#include "recycle/series.hpp"
#include "recycle/synth.hpp"
#include "recycle/tensor.hpp"
#include "recycle/timestamp.hpp"
#include "recycle/trainer.hpp"
