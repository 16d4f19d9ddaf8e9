#pragma once

#include "interval_union.hpp"
#include "master_solver.hpp"
#include "measure.hpp"
#include "measure_json.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "problem_spec.hpp"
#include "report_io.hpp"
#include "rmt_simulator.hpp"
#include "spectral_cdf.hpp"
#include "support_analyzer.hpp"
#include "validation.hpp"
