#pragma once

#include "sqfield/dynamics.hpp"
#include "sqfield/errors.hpp"
#include "sqfield/experiment.hpp"
#include "sqfield/free_field.hpp"
#include "sqfield/gibbs.hpp"
#include "sqfield/green.hpp"
#include "sqfield/hermite.hpp"
#include "sqfield/model.hpp"
#include "sqfield/rng.hpp"
#include "sqfield/stats.hpp"
#include "sqfield/torus.hpp"
#include "sqfield/wick.hpp"
