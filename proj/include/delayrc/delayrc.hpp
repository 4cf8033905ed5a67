#pragma once

#include "common.hpp"
#include "config.hpp"
#include "dde.hpp"
#include "experiment.hpp"
#include "mask.hpp"
#include "nodes.hpp"
#include "reservoir.hpp"
#include "rng.hpp"
#include "tasks.hpp"
#include "training.hpp"
