#pragma once

// Everything in one include.

#include "perclaw/bethe.hpp"
#include "perclaw/config.hpp"
#include "perclaw/csv.hpp"
#include "perclaw/dataset_io.hpp"
#include "perclaw/errors.hpp"
#include "perclaw/experiments.hpp"
#include "perclaw/graph_model.hpp"
#include "perclaw/lattice.hpp"
#include "perclaw/parallel.hpp"
#include "perclaw/rng.hpp"
#include "perclaw/stats.hpp"
#include "perclaw/svg_plot.hpp"
#include "perclaw/theory.hpp"
