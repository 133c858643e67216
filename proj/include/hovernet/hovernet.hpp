#pragma once

#include "hovernet/core.hpp"
#include "hovernet/error.hpp"
#include "hovernet/filters.hpp"
#include "hovernet/grid.hpp"
#include "hovernet/io.hpp"
#include "hovernet/losses.hpp"
#include "hovernet/metrics.hpp"
#include "hovernet/postproc.hpp"
#include "hovernet/synth.hpp"
#include "hovernet/targetgen.hpp"
#include "hovernet/tiling.hpp"
