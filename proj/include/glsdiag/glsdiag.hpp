#pragma once

#include "glsdiag/correlation.hpp"
#include "glsdiag/crossval.hpp"
#include "glsdiag/csv.hpp"
#include "glsdiag/dataset.hpp"
#include "glsdiag/diagnostics.hpp"
#include "glsdiag/fit.hpp"
#include "glsdiag/report_io.hpp"
#include "glsdiag/rng.hpp"
#include "glsdiag/types.hpp"
