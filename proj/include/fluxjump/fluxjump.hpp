#pragma once

// Umbrella header. http_transport.hpp is left out so that only code that needs
// a live HTTP client pulls in httplib.

#include "fluxjump/categories.hpp"
#include "fluxjump/collect.hpp"
#include "fluxjump/corpus.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/hash.hpp"
#include "fluxjump/jumps.hpp"
#include "fluxjump/log.hpp"
#include "fluxjump/pipeline.hpp"
#include "fluxjump/profiles.hpp"
#include "fluxjump/score.hpp"
#include "fluxjump/stats.hpp"
#include "fluxjump/svg.hpp"
#include "fluxjump/synth.hpp"
#include "fluxjump/task.hpp"
#include "fluxjump/transport.hpp"
