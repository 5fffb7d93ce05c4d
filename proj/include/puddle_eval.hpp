#pragma once

#include "puddle_eval/coco.hpp"
#include "puddle_eval/errors.hpp"
#include "puddle_eval/letters.hpp"
#include "puddle_eval/metrics.hpp"
#include "puddle_eval/plan.hpp"
#include "puddle_eval/report.hpp"
#include "puddle_eval/rng.hpp"
#include "puddle_eval/stats.hpp"
#include "puddle_eval/synth.hpp"
#include "puddle_eval/thermal.hpp"
