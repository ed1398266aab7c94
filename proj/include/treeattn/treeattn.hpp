#pragma once

#include "treeattn/tensor.hpp"
#include "treeattn/rng.hpp"
#include "treeattn/errors.hpp"
#include "treeattn/parameter.hpp"
#include "treeattn/tape.hpp"
#include "treeattn/gradcheck.hpp"
#include "treeattn/cells.hpp"
#include "treeattn/tree.hpp"
#include "treeattn/data.hpp"
#include "treeattn/prepare.hpp"
#include "treeattn/model.hpp"
#include "treeattn/metrics.hpp"
#include "treeattn/train.hpp"
#include "treeattn/config.hpp"
#include "treeattn/checkpoint.hpp"
