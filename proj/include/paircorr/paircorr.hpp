#pragma once

#include "paircorr/constants.hpp"
#include "paircorr/correlator.hpp"
#include "paircorr/curve_io.hpp"
#include "paircorr/error.hpp"
#include "paircorr/fitting.hpp"
#include "paircorr/hash.hpp"
#include "paircorr/inequalities.hpp"
#include "paircorr/ingest.hpp"
#include "paircorr/json_export.hpp"
#include "paircorr/models.hpp"
#include "paircorr/protocols.hpp"
#include "paircorr/sim_config.hpp"
#include "paircorr/simulator.hpp"
#include "paircorr/tagfile.hpp"
#include "paircorr/types.hpp"
