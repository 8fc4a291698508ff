#pragma once

#include "flightpatch/adam.hpp"
#include "flightpatch/checkpoint.hpp"
#include "flightpatch/commands.hpp"
#include "flightpatch/config.hpp"
#include "flightpatch/data.hpp"
#include "flightpatch/dataset.hpp"
#include "flightpatch/errors.hpp"
#include "flightpatch/geo.hpp"
#include "flightpatch/layers.hpp"
#include "flightpatch/model.hpp"
#include "flightpatch/ops.hpp"
#include "flightpatch/tensor.hpp"
#include "flightpatch/train.hpp"
#include "flightpatch/trajectory.hpp"
