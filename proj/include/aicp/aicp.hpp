#pragma once

// Convenience include for the whole library.

#include "aicp/graph.hpp"
#include "aicp/harness.hpp"
#include "aicp/icp.hpp"
#include "aicp/policy.hpp"
#include "aicp/scm.hpp"
#include "aicp/stats.hpp"
