#pragma once

#include "core.hpp"
#include "detection.hpp"
#include "experiment.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "normal.hpp"
#include "simgen.hpp"
#include "simplex.hpp"
#include "solver.hpp"
#include "transfer.hpp"
