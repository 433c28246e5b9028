#pragma once

// Umbrella header: the full statistical-path toolkit.

#include "statpath/config.hpp"
#include "statpath/demo.hpp"
#include "statpath/errors.hpp"
#include "statpath/field.hpp"
#include "statpath/fitting.hpp"
#include "statpath/fokker_planck.hpp"
#include "statpath/format.hpp"
#include "statpath/gain.hpp"
#include "statpath/geometry.hpp"
#include "statpath/io.hpp"
#include "statpath/langevin.hpp"
#include "statpath/lattice.hpp"
#include "statpath/manifest.hpp"
#include "statpath/mesh.hpp"
#include "statpath/model.hpp"
#include "statpath/optimize.hpp"
#include "statpath/path_integral.hpp"
#include "statpath/polynomial.hpp"
#include "statpath/rng.hpp"
#include "statpath/timeseries.hpp"
