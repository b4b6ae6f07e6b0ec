#pragma once

// Umbrella header: multi-agent video question answering engine.

#include "mavqa/agents.hpp"
#include "mavqa/backends.hpp"
#include "mavqa/bench.hpp"
#include "mavqa/captioning.hpp"
#include "mavqa/core.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/http.hpp"
#include "mavqa/organizer.hpp"
#include "mavqa/scenegraph.hpp"
#include "mavqa/serde.hpp"
#include "mavqa/topology.hpp"
