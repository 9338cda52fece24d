#pragma once

#include "nlspec/bootstrap.hpp"
#include "nlspec/errors.hpp"
#include "nlspec/experiments.hpp"
#include "nlspec/gmc.hpp"
#include "nlspec/innovation.hpp"
#include "nlspec/models.hpp"
#include "nlspec/parallel.hpp"
#include "nlspec/rng.hpp"
#include "nlspec/spectral.hpp"
#include "nlspec/stats.hpp"
