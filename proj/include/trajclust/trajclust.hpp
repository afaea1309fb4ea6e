#pragma once

#include "trajclust/common.hpp"
#include "trajclust/json_io.hpp"
#include "trajclust/trajdata.hpp"
#include "trajclust/dynamics.hpp"
#include "trajclust/ekfsim.hpp"
#include "trajclust/synth.hpp"
#include "trajclust/cluster.hpp"
#include "trajclust/init.hpp"
#include "trajclust/semantics.hpp"
#include "trajclust/plots.hpp"
#include "trajclust/config.hpp"
