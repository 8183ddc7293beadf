#pragma once

#include "recnn/bpts.hpp"
#include "recnn/cells.hpp"
#include "recnn/errors.hpp"
#include "recnn/harness.hpp"
#include "recnn/log.hpp"
#include "recnn/model.hpp"
#include "recnn/optim.hpp"
#include "recnn/parallel.hpp"
#include "recnn/structures.hpp"
#include "recnn/tasks.hpp"
