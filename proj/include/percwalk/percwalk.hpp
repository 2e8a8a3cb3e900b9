#pragma once

#include "percwalk/chain.hpp"
#include "percwalk/clusters.hpp"
#include "percwalk/configuration.hpp"
#include "percwalk/corrector.hpp"
#include "percwalk/dual.hpp"
#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"
#include "percwalk/legendre.hpp"
#include "percwalk/models.hpp"
#include "percwalk/montecarlo.hpp"
#include "percwalk/numerics.hpp"
#include "percwalk/perron.hpp"
#include "percwalk/rng.hpp"
#include "percwalk/text.hpp"
#include "percwalk/variational.hpp"
#include "percwalk/walk.hpp"
