#pragma once

#include "usersim/action.hpp"
#include "usersim/common.hpp"
#include "usersim/decoder.hpp"
#include "usersim/external.hpp"
#include "usersim/generators.hpp"
#include "usersim/goals.hpp"
#include "usersim/harness.hpp"
#include "usersim/metrics.hpp"
#include "usersim/ontology.hpp"
#include "usersim/policy.hpp"
#include "usersim/realizer.hpp"
#include "usersim/rl.hpp"
#include "usersim/semact.hpp"
#include "usersim/stats.hpp"
